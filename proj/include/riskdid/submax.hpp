#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "riskdid/inference.hpp"
#include "riskdid/mathutil.hpp"

namespace riskdid {

// K comparisons over G disjoint groups; row k lists the member group indices.
struct comparison_matrix {
  std::size_t n_groups = 0;
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> members;

  std::size_t n_comparisons() const { return members.size(); }
  void validate() const;
};

// Per-group statistic and worst-case moments at one null effect value.
struct group_statistics_result {
  std::vector<double> t;            // T_g
  std::vector<set_moments> upper;   // mean-maximizing worst case
  std::vector<set_moments> lower;   // mean-minimizing worst case
  std::vector<std::size_t> group_sizes;
};

// group_of_set[i] is the group of sets[i] in 0..G-1, or -1 to exclude the
// set. Groups must be nonempty.
group_statistics_result group_statistics(std::span<const study_set> sets,
                                         std::span<const int> group_of_set, std::size_t n_groups,
                                         double tau, double gamma);

// S_k, theta = C mu, Sigma = C V C^T, rho, and deviates for the
// mean-maximizing direction.
struct deviate_pack {
  std::vector<double> s;
  std::vector<double> theta;
  sym_matrix sigma;
  sym_matrix rho;
  std::vector<double> deviates;
};

deviate_pack build_deviates(const group_statistics_result& stats, const comparison_matrix& cmat,
                            double gamma);

struct critical_value_result {
  double kappa = 0.0;
  double mc_se = 0.0;
};

// Monte Carlo (1 - alpha2) quantile of max_k of N_K(0, rho). Non-PSD rho is
// repaired by eigenvalue clipping (with a warning flag on the result).
critical_value_result critical_value(const sym_matrix& rho, double alpha2, long n_draws,
                                     std::uint64_t seed, bool* psd_repaired = nullptr);

struct submax_options {
  double alpha = 0.05;
  double alpha1 = 0.025;  // spent on the CI for the overall effect
  double gamma = 1.0;
  bool two_sided = true;  // test departures in both directions (alpha2 split across them)
  int grid_points = 101;
  long mc_draws = 200000;
  std::uint64_t seed = 1;
  bool run_closed_testing = true;
  bool report_kappa = true;
  // overrides the (1-alpha1) CI as the tau range; lo == hi gives a one-point grid
  std::optional<std::pair<double, double>> fixed_tau_range;

  double alpha2() const { return alpha - alpha1; }
};

struct comparison_outcome {
  std::string label;
  double minmax_deviate = 0.0;  // min over the grid, max over directions
  double kappa = 0.0;           // this comparison's own critical value
  bool rejected = false;        // closed-testing decision
};

struct submax_result {
  bool global_reject = false;
  double minmax_deviate = 0.0;  // D_minmax over all comparisons
  double kappa = 0.0;           // full-set critical value (max over the grid)
  double kappa_mc_se = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double gamma = 1.0;
  std::pair<double, double> tau_range{0.0, 0.0};
  std::vector<double> tau_grid;
  std::vector<comparison_outcome> per_comparison;
  std::size_t n_groups = 0;
};

// Min-max submax test over a grid of plausible overall effects. The grid
// spans the (1 - alpha1) confidence interval; comparisons are tested at
// alpha2 = alpha - alpha1 with Monte Carlo critical values recomputed at
// every grid point (the maximum is used). Closed testing for the
// per-comparison decisions uses the sorted-deviate step-down shortcut, which
// coincides with exhaustive closure for this max-type evaluator.
submax_result minmax_test(std::span<const study_set> sets, std::span<const int> group_of_set,
                          std::size_t n_groups, const comparison_matrix& cmat,
                          const submax_options& options);

// Exhaustive closed testing over an arbitrary intersection-test evaluator:
// comparison k is rejected iff every subset containing k is rejected.
// Refuses K > 20; larger families need the max-type shortcut above.
std::vector<bool> closed_testing(
    std::size_t n_comparisons,
    const std::function<bool(const std::vector<std::size_t>&)>& reject_intersection);

// Panel-level wrapper: groups given as set_id -> group id.
submax_result minmax_test(const matched_design& design, const panel_dataset& d,
                          const std::string& outcome, horizon h,
                          const std::map<int, int>& groups_by_set_id,
                          const comparison_matrix& cmat, const submax_options& options);

}  // namespace riskdid
