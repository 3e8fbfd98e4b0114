#include "riskdid/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "riskdid/errors.hpp"
#include "riskdid/mathutil.hpp"

namespace riskdid {

std::string tail_name(tail t) {
  switch (t) {
    case tail::upper: return "upper";
    case tail::lower: return "lower";
    default: return "two_sided";
  }
}

tail parse_tail(const std::string& s) {
  if (s == "upper") return tail::upper;
  if (s == "lower") return tail::lower;
  if (s == "two_sided" || s == "two-sided") return tail::two_sided;
  fail(errc::config, "tail must be upper, lower, or two_sided; got '" + s + "'");
}

set_moments worst_case_set_moments(std::span<const double> scores, double gamma, int direction) {
  if (gamma < 1.0) fail(errc::domain, "gamma must be >= 1");
  std::size_t n = scores.size();
  if (n == 0) fail(errc::domain, "empty score vector");

  std::vector<double> sorted(scores.begin(), scores.end());
  // direction +1 piles probability on the largest scores; -1 on the smallest
  if (direction >= 0) std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  else std::sort(sorted.begin(), sorted.end());

  // prefix sums over the sorted order
  std::vector<double> ps(n + 1, 0.0), ps2(n + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    ps[j + 1] = ps[j] + sorted[j];
    ps2[j + 1] = ps2[j] + sorted[j] * sorted[j];
  }

  set_moments best;
  bool have = false;
  for (std::size_t h = 1; h <= n; ++h) {
    double denom = static_cast<double>(h) * gamma + static_cast<double>(n - h);
    double m = (gamma * ps[h] + (ps[n] - ps[h])) / denom;
    double m2 = (gamma * ps2[h] + (ps2[n] - ps2[h])) / denom;
    double v = std::max(0.0, m2 - m * m);
    double signed_mean = direction >= 0 ? m : -m;
    double best_signed = direction >= 0 ? best.mean : -best.mean;
    if (!have || signed_mean > best_signed + 1e-15 ||
        (std::fabs(signed_mean - best_signed) <= 1e-15 && v > best.variance)) {
      best = {m, v};
      have = true;
    }
  }
  return best;
}

study_moments permutation_moments(std::span<const study_set> sets, double tau0, double gamma,
                                  int direction) {
  if (gamma < 1.0) fail(errc::domain, "gamma must be >= 1");
  if (sets.empty()) fail(errc::empty_design, "no usable matched sets");
  study_moments out;
  std::vector<double> scores;
  for (const auto& s : sets) {
    s.assignment_scores(tau0, scores);
    set_moments m = worst_case_set_moments(scores, gamma, direction);
    out.mu += m.mean;
    out.sigma2 += m.variance;
  }
  return out;
}

double did_statistic(std::span<const study_set> sets, double tau0) {
  if (sets.empty()) fail(errc::empty_design, "no usable matched sets");
  double t = 0.0;
  for (const auto& s : sets) t += s.observed_contribution(tau0);
  return t;
}

namespace {

// one-tail worst-case p; fills the deviate as (T - mu)/sd for that tail
test_result one_tail(std::span<const study_set> sets, double tau0, double gamma, bool upper) {
  double t = did_statistic(sets, tau0);
  study_moments m = permutation_moments(sets, tau0, gamma, upper ? +1 : -1);
  test_result r;
  if (m.sigma2 <= 0.0) {
    r.degenerate = true;
    r.deviate = 0.0;
    if (upper) r.p = t <= m.mu ? 1.0 : 0.0;
    else r.p = t >= m.mu ? 1.0 : 0.0;
    return r;
  }
  r.deviate = (t - m.mu) / std::sqrt(m.sigma2);
  r.p = upper ? 1.0 - normal_cdf(r.deviate) : normal_cdf(r.deviate);
  return r;
}

}  // namespace

test_result permutation_test(std::span<const study_set> sets, double tau0, double gamma,
                             tail side) {
  if (side == tail::upper) return one_tail(sets, tau0, gamma, true);
  if (side == tail::lower) return one_tail(sets, tau0, gamma, false);
  test_result up = one_tail(sets, tau0, gamma, true);
  test_result lo = one_tail(sets, tau0, gamma, false);
  test_result r;
  r.degenerate = up.degenerate || lo.degenerate;
  r.p = std::min(1.0, 2.0 * std::min(up.p, lo.p));
  r.deviate = std::fabs(up.deviate) >= std::fabs(lo.deviate) ? up.deviate : lo.deviate;
  return r;
}

double point_estimate(std::span<const study_set> sets) {
  if (sets.empty()) fail(errc::empty_design, "no usable matched sets");
  double total = 0.0;
  for (const auto& s : sets) total += s.observed_contribution(0.0);
  return total / static_cast<double>(sets.size());
}

namespace {

double outcome_scale(std::span<const study_set> sets, double estimate) {
  std::vector<double> observed;
  observed.reserve(sets.size());
  for (const auto& s : sets) observed.push_back(s.observed_contribution(0.0));
  double sd = sample_sd(observed);
  return std::max({1e-9, sd, std::fabs(estimate)});
}

}  // namespace

std::pair<double, double> confidence_interval(std::span<const study_set> sets, double alpha,
                                              double gamma) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(errc::domain, "alpha must lie in (0,1)");
  double center = point_estimate(sets);
  double scale = outcome_scale(sets, center);
  double tol = 1e-6 * scale;

  auto p_at = [&](double tau0) { return permutation_test(sets, tau0, gamma, tail::two_sided).p; };

  auto endpoint = [&](int sign) {
    // bracket: p(center) > alpha (it is 1 there); expand until p <= alpha
    double inside = center;
    double step = scale;
    double outside = center + sign * step;
    int guard = 0;
    while (p_at(outside) > alpha) {
      inside = outside;
      step *= 2.0;
      outside = center + sign * step;
      if (++guard > 128)
        return sign > 0 ? std::numeric_limits<double>::infinity()
                        : -std::numeric_limits<double>::infinity();
    }
    while (std::fabs(outside - inside) > tol) {
      double mid = 0.5 * (inside + outside);
      if (p_at(mid) > alpha) inside = mid;
      else outside = mid;
    }
    return 0.5 * (inside + outside);
  };

  double lower = endpoint(-1);
  double upper = endpoint(+1);
  return {lower, upper};
}

gamma_star_result gamma_star(std::span<const study_set> sets, double alpha, tail side,
                             double tau0) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(errc::domain, "alpha must lie in (0,1)");
  gamma_star_result out;
  auto p_at = [&](double g) { return permutation_test(sets, tau0, g, side).p; };
  if (p_at(1.0) > alpha) return out;  // not significant even without hidden bias
  out.applicable = true;
  constexpr double kCap = 10.0;
  if (p_at(kCap) <= alpha) {
    out.value = kCap;
    out.capped = true;
    return out;
  }
  double lo = 1.0, hi = kCap;  // p(lo) <= alpha < p(hi)
  while (hi - lo > 0.01) {
    double mid = 0.5 * (lo + hi);
    if (p_at(mid) <= alpha) lo = mid;
    else hi = mid;
  }
  out.value = lo;
  return out;
}

did_result estimate_outcome(const matched_design& design, const panel_dataset& d,
                            const std::string& outcome, horizon h, double alpha, tail side) {
  contrast_study study = build_study(design, d, outcome, h);
  if (study.sets.empty()) fail(errc::empty_design, "no usable sets for outcome " + outcome);
  did_result r;
  r.outcome = outcome;
  r.h = h;
  r.sets_used = static_cast<int>(study.sets.size());
  r.sets_excluded = static_cast<int>(study.excluded_set_ids.size());
  r.estimate = point_estimate(study.sets);
  r.p_value = permutation_test(study.sets, 0.0, 1.0, side).p;
  auto ci = confidence_interval(study.sets, alpha, 1.0);
  r.ci_lower = ci.first;
  r.ci_upper = ci.second;
  r.gamma = gamma_star(study.sets, alpha, side, 0.0);
  return r;
}

}  // namespace riskdid
