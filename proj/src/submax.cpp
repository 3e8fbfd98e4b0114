#include "riskdid/submax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "riskdid/errors.hpp"
#include "riskdid/rand.hpp"

namespace riskdid {

void comparison_matrix::validate() const {
  if (members.empty()) fail(errc::config, "comparison matrix has no rows");
  if (!labels.empty() && labels.size() != members.size())
    fail(errc::config, "comparison labels do not match rows");
  for (const auto& row : members) {
    if (row.empty()) fail(errc::config, "comparison row selects no groups");
    for (std::size_t g : row)
      if (g >= n_groups) fail(errc::config, "comparison row names group out of range");
  }
}

group_statistics_result group_statistics(std::span<const study_set> sets,
                                         std::span<const int> group_of_set, std::size_t n_groups,
                                         double tau, double gamma) {
  if (group_of_set.size() != sets.size())
    fail(errc::config, "group assignment does not match the number of sets");
  if (n_groups == 0) fail(errc::config, "no groups");
  group_statistics_result out;
  out.t.assign(n_groups, 0.0);
  out.upper.assign(n_groups, {});
  out.lower.assign(n_groups, {});
  out.group_sizes.assign(n_groups, 0);

  std::vector<double> scores;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    int g = group_of_set[i];
    if (g < 0) continue;
    if (static_cast<std::size_t>(g) >= n_groups)
      fail(errc::group_overlap, "set assigned to group out of range");
    out.group_sizes[static_cast<std::size_t>(g)]++;
    out.t[static_cast<std::size_t>(g)] += sets[i].observed_contribution(tau);
    sets[i].assignment_scores(tau, scores);
    set_moments up = worst_case_set_moments(scores, gamma, +1);
    set_moments dn = worst_case_set_moments(scores, gamma, -1);
    out.upper[static_cast<std::size_t>(g)].mean += up.mean;
    out.upper[static_cast<std::size_t>(g)].variance += up.variance;
    out.lower[static_cast<std::size_t>(g)].mean += dn.mean;
    out.lower[static_cast<std::size_t>(g)].variance += dn.variance;
  }
  for (std::size_t g = 0; g < n_groups; ++g)
    if (out.group_sizes[g] == 0)
      fail(errc::config, "group " + std::to_string(g) + " contains no sets");
  return out;
}

deviate_pack build_deviates(const group_statistics_result& stats, const comparison_matrix& cmat,
                            double gamma) {
  if (gamma < 1.0) fail(errc::domain, "gamma must be >= 1");
  cmat.validate();
  if (cmat.n_groups != stats.t.size())
    fail(errc::config, "comparison matrix group count does not match statistics");
  std::size_t k_count = cmat.n_comparisons();
  deviate_pack pack;
  pack.s.assign(k_count, 0.0);
  pack.theta.assign(k_count, 0.0);
  pack.sigma = sym_matrix(k_count);
  pack.rho = sym_matrix(k_count);
  pack.deviates.assign(k_count, 0.0);

  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t g : cmat.members[k]) {
      pack.s[k] += stats.t[g];
      pack.theta[k] += stats.upper[g].mean;
    }
  }
  // Sigma = C V C^T with V diagonal: entry (k,k') sums shared groups' variances
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t k2 = k; k2 < k_count; ++k2) {
      double cov = 0.0;
      std::size_t a = 0, b = 0;
      const auto& ra = cmat.members[k];
      const auto& rb = cmat.members[k2];
      while (a < ra.size() && b < rb.size()) {
        if (ra[a] == rb[b]) {
          cov += stats.upper[ra[a]].variance;
          ++a;
          ++b;
        } else if (ra[a] < rb[b]) {
          ++a;
        } else {
          ++b;
        }
      }
      pack.sigma.at(k, k2) = cov;
      pack.sigma.at(k2, k) = cov;
    }
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    double var = pack.sigma.at(k, k);
    if (!(var > 0.0))
      fail(errc::degenerate, "comparison " + std::to_string(k) + " has zero variance");
    pack.deviates[k] = (pack.s[k] - pack.theta[k]) / std::sqrt(var);
  }
  for (std::size_t k = 0; k < k_count; ++k)
    for (std::size_t k2 = 0; k2 < k_count; ++k2)
      pack.rho.at(k, k2) = pack.sigma.at(k, k2) /
                           std::sqrt(pack.sigma.at(k, k) * pack.sigma.at(k2, k2));
  for (std::size_t k = 0; k < k_count; ++k) pack.rho.at(k, k) = 1.0;
  return pack;
}

namespace {

// empirical upper quantile with the convention used for all rejections:
// kappa is the cnt-th largest draw with cnt = ceil(alpha2 * n); a statistic
// rejects iff strictly more extreme than kappa
double order_stat_kappa(std::vector<double>& values, double alpha2, double* mc_se) {
  std::size_t n = values.size();
  std::size_t cnt = static_cast<std::size_t>(std::ceil(alpha2 * static_cast<double>(n)));
  if (cnt < 1) cnt = 1;
  if (cnt > n) cnt = n;
  std::size_t idx = n - cnt;  // index in ascending order
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx),
                   values.end());
  double kappa = values[idx];
  if (mc_se) {
    // quantile SE via density estimate from nearby order statistics
    std::size_t h = std::max<std::size_t>(1, n / 200);
    std::size_t lo = idx >= h ? idx - h : 0;
    std::size_t hi = std::min(n - 1, idx + h);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo),
                     values.end());
    double vlo = values[lo];
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(hi),
                     values.end());
    double vhi = values[hi];
    double density = vhi > vlo
                         ? (static_cast<double>(hi - lo) / static_cast<double>(n)) / (vhi - vlo)
                         : 0.0;
    double p = alpha2;
    *mc_se = density > 0.0
                 ? std::sqrt(p * (1.0 - p) / static_cast<double>(n)) / density
                 : 0.0;
  }
  return kappa;
}

}  // namespace

critical_value_result critical_value(const sym_matrix& rho, double alpha2, long n_draws,
                                     std::uint64_t seed, bool* psd_repaired) {
  if (rho.n == 0) fail(errc::config, "empty correlation matrix");
  if (!(alpha2 > 0.0 && alpha2 < 1.0)) fail(errc::domain, "alpha2 must lie in (0,1)");
  if (n_draws < 100000) fail(errc::domain, "critical_value requires at least 1e5 draws");
  std::size_t k = rho.n;

  sym_matrix work = rho;
  if (psd_repaired) *psd_repaired = false;
  sym_matrix lower;
  if (!cholesky_lower(work, lower)) {
    make_correlation_psd(work);
    if (psd_repaired) *psd_repaired = true;
    // small jitter ladder for the strictly semidefinite case
    double jitter = 1e-12;
    while (!cholesky_lower(work, lower)) {
      for (std::size_t i = 0; i < k; ++i) work.at(i, i) = 1.0 + jitter;
      jitter *= 10.0;
      if (jitter > 1e-3) fail(errc::degenerate, "correlation matrix cannot be factorized");
    }
  }

  rng r(seed);
  std::vector<double> z(k), maxima(static_cast<std::size_t>(n_draws));
  for (long d = 0; d < n_draws; ++d) {
    for (auto& v : z) v = r.normal();
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      double x = 0.0;
      for (std::size_t j = 0; j <= i; ++j) x += lower.at(i, j) * z[j];
      if (x > best) best = x;
    }
    maxima[static_cast<std::size_t>(d)] = best;
  }
  critical_value_result out;
  out.kappa = order_stat_kappa(maxima, alpha2, &out.mc_se);
  return out;
}

std::vector<bool> closed_testing(
    std::size_t n_comparisons,
    const std::function<bool(const std::vector<std::size_t>&)>& reject_intersection) {
  if (n_comparisons == 0) return {};
  if (n_comparisons > 20)
    fail(errc::unsupported,
         "exhaustive closed testing refuses K > 20; use the max-type shortcut");
  std::size_t total = std::size_t{1} << n_comparisons;
  std::vector<bool> rejected(n_comparisons, true);
  std::vector<std::size_t> subset;
  for (std::size_t mask = 1; mask < total; ++mask) {
    subset.clear();
    for (std::size_t k = 0; k < n_comparisons; ++k)
      if (mask & (std::size_t{1} << k)) subset.push_back(k);
    if (!reject_intersection(subset)) {
      for (std::size_t k : subset) rejected[k] = false;
    }
  }
  return rejected;
}

namespace {

// lazily grown matrix of iid standard normal draws, one row of G values per
// draw index; shared across grid points so critical values use common
// random numbers (monotone in the comparison subset by construction)
class draw_stream {
 public:
  draw_stream(std::uint64_t seed, std::size_t g) : rng_(seed), g_(g) {}

  const double* row(std::size_t d) {
    while (rows_ <= d) {
      std::size_t add = 4096;
      buf_.resize((rows_ + add) * g_);
      for (std::size_t i = rows_ * g_; i < buf_.size(); ++i) buf_[i] = rng_.normal();
      rows_ += add;
    }
    return buf_.data() + d * g_;
  }

 private:
  rng rng_;
  std::size_t g_ = 0;
  std::size_t rows_ = 0;
  std::vector<double> buf_;
};

struct flat_comparisons {
  std::size_t k_count = 0;
  std::vector<std::size_t> offsets;  // k_count + 1
  std::vector<std::size_t> groups;   // concatenated member lists
};

flat_comparisons flatten(const comparison_matrix& cmat) {
  flat_comparisons f;
  f.k_count = cmat.n_comparisons();
  f.offsets.push_back(0);
  for (const auto& row : cmat.members) {
    for (std::size_t g : row) f.groups.push_back(g);
    f.offsets.push_back(f.groups.size());
  }
  return f;
}

// Deviate surface over the tau grid. In two-sided mode each comparison
// contributes both directions to one joint statistic: its deviate at a grid
// point is max of the up and down standardized departures, and draw values
// double the columns the same way (so at gamma = 1 a draw value is |x|/sigma
// exactly). Departures in either direction then keep the grid minimum large.
struct grid_tables {
  bool two_sided = false;
  std::vector<std::vector<double>> dev;       // [grid][K] max-over-directions deviate
  std::vector<std::vector<double>> sigma_up;  // [grid][K]
  std::vector<std::vector<double>> sigma_dn;  // [grid][K]
  std::vector<std::vector<double>> wg_up;     // [grid][G] sqrt of group variance
  std::vector<std::vector<double>> wg_dn;     // [grid][G]
  std::vector<double> m;                      // per-comparison min over grid
  double minmax = 0.0;                        // min over grid of max over comparisons
};

grid_tables build_tables(std::span<const study_set> sets, std::span<const int> group_of_set,
                         std::size_t n_groups, const flat_comparisons& f,
                         const std::vector<double>& grid, double gamma, bool two_sided) {
  grid_tables t;
  t.two_sided = two_sided;
  std::size_t n_tau = grid.size();
  t.dev.assign(n_tau, std::vector<double>(f.k_count, 0.0));
  t.sigma_up.assign(n_tau, std::vector<double>(f.k_count, 0.0));
  t.wg_up.assign(n_tau, std::vector<double>(n_groups, 0.0));
  if (two_sided) {
    t.sigma_dn.assign(n_tau, std::vector<double>(f.k_count, 0.0));
    t.wg_dn.assign(n_tau, std::vector<double>(n_groups, 0.0));
  }
  t.m.assign(f.k_count, std::numeric_limits<double>::infinity());
  t.minmax = std::numeric_limits<double>::infinity();

  for (std::size_t ti = 0; ti < n_tau; ++ti) {
    group_statistics_result stats =
        group_statistics(sets, group_of_set, n_groups, grid[ti], gamma);
    for (std::size_t g = 0; g < n_groups; ++g) {
      t.wg_up[ti][g] = std::sqrt(stats.upper[g].variance);
      if (two_sided) t.wg_dn[ti][g] = std::sqrt(stats.lower[g].variance);
    }
    double max_dev = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < f.k_count; ++k) {
      double s = 0.0, theta_up = 0.0, var_up = 0.0, theta_dn = 0.0, var_dn = 0.0;
      for (std::size_t idx = f.offsets[k]; idx < f.offsets[k + 1]; ++idx) {
        std::size_t g = f.groups[idx];
        s += stats.t[g];
        theta_up += stats.upper[g].mean;
        var_up += stats.upper[g].variance;
        theta_dn += stats.lower[g].mean;
        var_dn += stats.lower[g].variance;
      }
      if (!(var_up > 0.0) || (two_sided && !(var_dn > 0.0)))
        fail(errc::degenerate, "comparison " + std::to_string(k) + " has zero variance");
      t.sigma_up[ti][k] = std::sqrt(var_up);
      double dev = (s - theta_up) / t.sigma_up[ti][k];
      if (two_sided) {
        t.sigma_dn[ti][k] = std::sqrt(var_dn);
        dev = std::max(dev, (theta_dn - s) / t.sigma_dn[ti][k]);
      }
      t.dev[ti][k] = dev;
      t.m[k] = std::min(t.m[k], dev);
      max_dev = std::max(max_dev, dev);
    }
    t.minmax = std::min(t.minmax, max_dev);
  }
  return t;
}

// Count-based rejection rule shared by every Monte Carlo comparison:
// statistic rejects iff fewer than ceil(alpha2*n) draws reach it.
long reject_limit(long n_draws, double alpha2) {
  return static_cast<long>(std::ceil(alpha2 * static_cast<double>(n_draws)));
}

// a comparison's draw value at one grid point (max over directions)
inline double draw_value(const grid_tables& t, std::size_t ti, const flat_comparisons& f,
                         std::size_t k, const double* pg_up, const double* pg_dn) {
  double x_up = 0.0;
  for (std::size_t idx = f.offsets[k]; idx < f.offsets[k + 1]; ++idx)
    x_up += pg_up[f.groups[idx]];
  double v = x_up / t.sigma_up[ti][k];
  if (t.two_sided) {
    double x_dn = 0.0;
    for (std::size_t idx = f.offsets[k]; idx < f.offsets[k + 1]; ++idx)
      x_dn += pg_dn[f.groups[idx]];
    v = std::max(v, -x_dn / t.sigma_dn[ti][k]);
  }
  return v;
}

// Full-set scan at one grid point: does stat clear this tau's critical
// value? Aborts as soon as the exceedance count reaches the limit.
bool full_set_pass(const grid_tables& t, std::size_t ti, const flat_comparisons& f,
                   double stat, long n_draws, long limit, draw_stream& draws,
                   std::vector<double>& pg_up, std::vector<double>& pg_dn) {
  std::size_t n_groups = t.wg_up[ti].size();
  long count = 0;
  for (long d = 0; d < n_draws; ++d) {
    const double* z = draws.row(static_cast<std::size_t>(d));
    for (std::size_t g = 0; g < n_groups; ++g) {
      pg_up[g] = t.wg_up[ti][g] * z[g];
      if (t.two_sided) pg_dn[g] = t.wg_dn[ti][g] * z[g];
    }
    bool exceed = false;
    for (std::size_t k = 0; k < f.k_count && !exceed; ++k)
      exceed = draw_value(t, ti, f, k, pg_up.data(), pg_dn.data()) >= stat;
    if (exceed && ++count >= limit) return false;
  }
  return true;
}

// Step-down pass at one grid point. order holds comparison indices sorted by
// descending minmax deviate; thresholds[i] is the step-i statistic. Returns
// the first step that fails here (steps at or beyond `bound` are ignored).
std::size_t step_down_pass(const grid_tables& t, std::size_t ti, const flat_comparisons& f,
                           const std::vector<std::size_t>& order,
                           const std::vector<double>& thresholds, std::size_t bound,
                           long n_draws, long limit, draw_stream& draws,
                           std::vector<double>& pg_up, std::vector<double>& pg_dn) {
  std::size_t k_count = f.k_count;
  std::size_t n_groups = t.wg_up[ti].size();
  std::vector<long> counts(k_count, 0);
  std::vector<double> v(k_count);
  std::size_t first_fail = bound;
  for (long d = 0; d < n_draws; ++d) {
    const double* z = draws.row(static_cast<std::size_t>(d));
    for (std::size_t g = 0; g < n_groups; ++g) {
      pg_up[g] = t.wg_up[ti][g] * z[g];
      if (t.two_sided) pg_dn[g] = t.wg_dn[ti][g] * z[g];
    }
    for (std::size_t k = 0; k < k_count; ++k)
      v[k] = draw_value(t, ti, f, k, pg_up.data(), pg_dn.data());
    // suffix maxima in sorted order
    double sm = -std::numeric_limits<double>::infinity();
    for (std::size_t i = k_count; i-- > 0;) {
      sm = std::max(sm, v[order[i]]);
      if (i < first_fail && sm >= thresholds[i]) {
        if (++counts[i] >= limit) {
          first_fail = i;
          if (first_fail == 0) return 0;
        }
      }
    }
  }
  return first_fail;
}

std::vector<double> make_grid(std::pair<double, double> range, int points) {
  if (!(std::isfinite(range.first) && std::isfinite(range.second)))
    fail(errc::degenerate, "tau grid range is not finite; the CI is unbounded");
  if (range.second < range.first) std::swap(range.first, range.second);
  std::vector<double> grid;
  if (range.second == range.first || points <= 1) {
    grid.push_back(range.first);
    return grid;
  }
  grid.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i)
    grid.push_back(range.first +
                   (range.second - range.first) * static_cast<double>(i) /
                       static_cast<double>(points - 1));
  return grid;
}

}  // namespace

submax_result minmax_test(std::span<const study_set> sets, std::span<const int> group_of_set,
                          std::size_t n_groups, const comparison_matrix& cmat,
                          const submax_options& options) {
  cmat.validate();
  if (cmat.n_groups != n_groups) fail(errc::config, "comparison matrix group count mismatch");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) fail(errc::domain, "alpha outside (0,1)");
  if (options.alpha1 < 0.0 || options.alpha1 >= options.alpha)
    fail(errc::domain, "alpha1 must satisfy 0 <= alpha1 < alpha");
  if (options.mc_draws < 100000) fail(errc::domain, "mc_draws must be at least 1e5");

  submax_result result;
  result.alpha1 = options.alpha1;
  result.alpha2 = options.alpha2();
  result.gamma = options.gamma;
  result.n_groups = n_groups;

  // tau grid from the (1 - alpha1) CI unless overridden
  if (options.fixed_tau_range) {
    result.tau_range = *options.fixed_tau_range;
  } else {
    if (!(options.alpha1 > 0.0))
      fail(errc::domain, "alpha1 must be positive when the grid comes from the CI");
    std::vector<study_set> included;
    for (std::size_t i = 0; i < sets.size(); ++i)
      if (group_of_set[i] >= 0) included.push_back(sets[i]);
    if (included.empty()) fail(errc::empty_design, "no sets included in any group");
    result.tau_range = confidence_interval(included, options.alpha1, options.gamma);
  }
  std::vector<double> grid = make_grid(result.tau_range, options.grid_points);
  result.tau_grid = grid;

  flat_comparisons f = flatten(cmat);
  std::size_t k_count = f.k_count;
  long limit = reject_limit(options.mc_draws, result.alpha2);

  draw_stream draws(derive_seed(options.seed, 7701), n_groups);
  std::vector<double> pg_up(n_groups), pg_dn(n_groups);

  grid_tables tables =
      build_tables(sets, group_of_set, n_groups, f, grid, options.gamma, options.two_sided);
  result.minmax_deviate = tables.minmax;

  // global: D_minmax must clear every grid point's critical value
  result.global_reject = true;
  for (std::size_t ti = 0; ti < grid.size() && result.global_reject; ++ti)
    result.global_reject = full_set_pass(tables, ti, f, tables.minmax, options.mc_draws, limit,
                                         draws, pg_up, pg_dn);

  // closed testing by step-down over deviates sorted descending
  std::vector<std::size_t> order(k_count);
  for (std::size_t i = 0; i < k_count; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (tables.m[a] != tables.m[b]) return tables.m[a] > tables.m[b];
    return a < b;
  });
  std::size_t first_fail = 0;
  if (options.run_closed_testing) {
    std::vector<double> thresholds(k_count);
    for (std::size_t i = 0; i < k_count; ++i) thresholds[i] = tables.m[order[i]];
    first_fail = k_count;
    for (std::size_t ti = 0; ti < grid.size() && first_fail > 0; ++ti)
      first_fail = step_down_pass(tables, ti, f, order, thresholds, first_fail,
                                  options.mc_draws, limit, draws, pg_up, pg_dn);
  }

  result.per_comparison.assign(k_count, {});
  for (std::size_t k = 0; k < k_count; ++k) {
    auto& row = result.per_comparison[k];
    row.label = cmat.labels.empty() ? "c" + std::to_string(k + 1) : cmat.labels[k];
    row.minmax_deviate = tables.m[k];
    row.kappa = std::numeric_limits<double>::quiet_NaN();
    if (options.run_closed_testing) {
      std::size_t pos = static_cast<std::size_t>(
          std::find(order.begin(), order.end(), k) - order.begin());
      row.rejected = pos < first_fail;
    }
  }

  // report pass: explicit kappa quantiles from the same draw stream; the
  // count-based decisions above match "stat > kappa" by construction
  result.kappa = std::numeric_limits<double>::quiet_NaN();
  if (options.report_kappa) {
    std::vector<double> values(static_cast<std::size_t>(options.mc_draws));
    result.kappa = -std::numeric_limits<double>::infinity();
    for (std::size_t ti = 0; ti < grid.size(); ++ti) {
      for (long dr = 0; dr < options.mc_draws; ++dr) {
        const double* z = draws.row(static_cast<std::size_t>(dr));
        for (std::size_t g = 0; g < n_groups; ++g) {
          pg_up[g] = tables.wg_up[ti][g] * z[g];
          if (tables.two_sided) pg_dn[g] = tables.wg_dn[ti][g] * z[g];
        }
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < k_count; ++k)
          best = std::max(best, draw_value(tables, ti, f, k, pg_up.data(), pg_dn.data()));
        values[static_cast<std::size_t>(dr)] = best;
      }
      double se = 0.0;
      double kappa = order_stat_kappa(values, result.alpha2, &se);
      if (kappa > result.kappa) {
        result.kappa = kappa;
        result.kappa_mc_se = se;
      }
    }
    // a single comparison's deviate is pivotal at every grid point, so its
    // own critical value needs only one grid point of draws
    for (std::size_t k = 0; k < k_count; ++k) {
      for (long dr = 0; dr < options.mc_draws; ++dr) {
        const double* z = draws.row(static_cast<std::size_t>(dr));
        for (std::size_t g = 0; g < n_groups; ++g) {
          pg_up[g] = tables.wg_up[0][g] * z[g];
          if (tables.two_sided) pg_dn[g] = tables.wg_dn[0][g] * z[g];
        }
        values[static_cast<std::size_t>(dr)] =
            draw_value(tables, 0, f, k, pg_up.data(), pg_dn.data());
      }
      result.per_comparison[k].kappa = order_stat_kappa(values, result.alpha2, nullptr);
    }
  }
  return result;
}

submax_result minmax_test(const matched_design& design, const panel_dataset& d,
                          const std::string& outcome, horizon h,
                          const std::map<int, int>& groups_by_set_id,
                          const comparison_matrix& cmat, const submax_options& options) {
  contrast_study study = build_study(design, d, outcome, h);
  if (study.sets.empty()) fail(errc::empty_design, "no usable sets");
  std::vector<int> group_of_set(study.sets.size(), -1);
  for (std::size_t i = 0; i < study.sets.size(); ++i) {
    auto it = groups_by_set_id.find(study.sets[i].set_id);
    if (it != groups_by_set_id.end()) group_of_set[i] = it->second;
  }
  return minmax_test(study.sets, group_of_set, cmat.n_groups, cmat, options);
}

}  // namespace riskdid
