#include "riskdid/mathutil.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace riskdid {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Wichura's algorithm AS241 (PPND16).
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -HUGE_VAL;
    if (p == 1.0) return HUGE_VAL;
    throw std::invalid_argument("normal_quantile: p outside [0,1]");
  }
  double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double m = mean(v);
  double ss = 0.0;
  for (double x : v) {
    double d = x - m;
    ss += d * d;
  }
  return ss / static_cast<double>(v.size() - 1);
}

double sample_sd(std::span<const double> v) { return std::sqrt(sample_variance(v)); }

bool cholesky_lower(const sym_matrix& m, sym_matrix& lower) {
  std::size_t n = m.n;
  lower = sym_matrix(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < j; ++k) s += lower.at(i, k) * lower.at(j, k);
      if (i == j) {
        double d = m.at(i, i) - s;
        if (d <= 0.0) return false;
        lower.at(i, j) = std::sqrt(d);
      } else {
        lower.at(i, j) = (m.at(i, j) - s) / lower.at(j, j);
      }
    }
  }
  return true;
}

void jacobi_eigen(const sym_matrix& m, std::vector<double>& values, sym_matrix& vectors) {
  std::size_t n = m.n;
  sym_matrix a = m;
  vectors = sym_matrix(n);
  for (std::size_t i = 0; i < n; ++i) vectors.at(i, i) = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a.at(p, q);
        if (std::fabs(apq) < 1e-300) continue;
        double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double vkp = vectors.at(k, p), vkq = vectors.at(k, q);
          vectors.at(k, p) = c * vkp - s * vkq;
          vectors.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  values.resize(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a.at(i, i);

  // sort ascending, permuting eigenvector columns alongside
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
  std::vector<double> sorted_vals(n);
  sym_matrix sorted_vecs(n);
  for (std::size_t c = 0; c < n; ++c) {
    sorted_vals[c] = values[order[c]];
    for (std::size_t r = 0; r < n; ++r) sorted_vecs.at(r, c) = vectors.at(r, order[c]);
  }
  values = std::move(sorted_vals);
  vectors = std::move(sorted_vecs);
}

double make_correlation_psd(sym_matrix& rho) {
  std::vector<double> vals;
  sym_matrix vecs;
  jacobi_eigen(rho, vals, vecs);
  double min_eig = vals.empty() ? 0.0 : vals.front();
  if (min_eig >= 0.0) return min_eig;
  std::size_t n = rho.n;
  for (double& v : vals) v = std::max(v, 0.0);
  sym_matrix rebuilt(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += vecs.at(i, k) * vals[k] * vecs.at(j, k);
      rebuilt.at(i, j) = s;
    }
  // rescale to unit diagonal
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = rebuilt.at(i, i) > 0.0 ? std::sqrt(rebuilt.at(i, i)) : 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) rho.at(i, j) = rebuilt.at(i, j) / (d[i] * d[j]);
  for (std::size_t i = 0; i < n; ++i) rho.at(i, i) = 1.0;
  return min_eig;
}

bool solve_least_squares(const std::vector<std::vector<double>>& x_rows,
                         const std::vector<double>& y, std::vector<double>& beta) {
  std::size_t n = x_rows.size();
  std::size_t p = n > 0 ? x_rows[0].size() : 0;
  sym_matrix xtx(p);
  std::vector<double> xty(p, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < p; ++i) {
      xty[i] += x_rows[r][i] * y[r];
      for (std::size_t j = i; j < p; ++j) xtx.at(i, j) += x_rows[r][i] * x_rows[r][j];
    }
  }
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < i; ++j) xtx.at(i, j) = xtx.at(j, i);

  auto try_solve = [&](const sym_matrix& m) -> bool {
    sym_matrix lower;
    if (!cholesky_lower(m, lower)) return false;
    // forward then back substitution
    std::vector<double> z(p, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
      double s = xty[i];
      for (std::size_t k = 0; k < i; ++k) s -= lower.at(i, k) * z[k];
      z[i] = s / lower.at(i, i);
    }
    beta.assign(p, 0.0);
    for (std::size_t ii = p; ii-- > 0;) {
      double s = z[ii];
      for (std::size_t k = ii + 1; k < p; ++k) s -= lower.at(k, ii) * beta[k];
      beta[ii] = s / lower.at(ii, ii);
    }
    return true;
  };

  if (try_solve(xtx)) return true;
  double trace = 0.0;
  for (std::size_t i = 0; i < p; ++i) trace += xtx.at(i, i);
  double ridge = 1e-8 * (trace > 0.0 ? trace / static_cast<double>(p) : 1.0);
  sym_matrix reg = xtx;
  for (std::size_t i = 0; i < p; ++i) reg.at(i, i) += ridge;
  if (!try_solve(reg)) {
    // last resort: heavier ridge, still deterministic
    for (std::size_t i = 0; i < p; ++i) reg.at(i, i) += 1e-6 + 1e-6 * reg.at(i, i);
    try_solve(reg);
  }
  return false;
}

}  // namespace riskdid
