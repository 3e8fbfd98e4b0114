#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace riskdid {

double normal_cdf(double x);
double normal_quantile(double p);  // Wichura AS241, ~1e-15 relative accuracy

double mean(std::span<const double> v);
// unbiased sample variance; 0 when fewer than 2 elements
double sample_variance(std::span<const double> v);
double sample_sd(std::span<const double> v);

// Dense symmetric matrix stored row-major, n x n.
struct sym_matrix {
  std::size_t n = 0;
  std::vector<double> a;

  sym_matrix() = default;
  explicit sym_matrix(std::size_t dim) : n(dim), a(dim * dim, 0.0) {}
  double& at(std::size_t i, std::size_t j) { return a[i * n + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

// Lower Cholesky factor; returns false if the matrix is not numerically PD.
bool cholesky_lower(const sym_matrix& m, sym_matrix& lower);

// Jacobi eigendecomposition of a symmetric matrix: eigenvalues ascending,
// columns of vectors are the corresponding eigenvectors.
void jacobi_eigen(const sym_matrix& m, std::vector<double>& values, sym_matrix& vectors);

// Clip negative eigenvalues at zero, reassemble, and rescale to unit
// diagonal. Returns the smallest eigenvalue seen (before clipping).
double make_correlation_psd(sym_matrix& rho);

// Least squares via normal equations with optional ridge; returns false if a
// ridge fallback (penalty 1e-8 * trace scale) was needed.
bool solve_least_squares(const std::vector<std::vector<double>>& x_rows,
                         const std::vector<double>& y, std::vector<double>& beta);

}  // namespace riskdid
