#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "riskdid/contrasts.hpp"

namespace riskdid {

enum class tail { upper, lower, two_sided };

std::string tail_name(tail t);
tail parse_tail(const std::string& s);

struct set_moments {
  double mean = 0.0;
  double variance = 0.0;
};

// Null moments of one set's treated contribution under the sensitivity model
// with parameter gamma >= 1. Candidate distributions put probability
// gamma/(h*gamma + n - h) on the h highest scores and 1/(h*gamma + n - h) on
// the rest; direction +1 takes the mean-maximizing h, -1 the minimizing one
// (ties resolved toward the larger variance). gamma = 1 reduces to the
// uniform assignment exactly.
set_moments worst_case_set_moments(std::span<const double> scores, double gamma, int direction);

struct study_moments {
  double mu = 0.0;
  double sigma2 = 0.0;
};

study_moments permutation_moments(std::span<const study_set> sets, double tau0, double gamma,
                                  int direction = +1);

// T = sum over sets of the observed treated contribution at null tau0.
double did_statistic(std::span<const study_set> sets, double tau0);

struct test_result {
  double p = 1.0;
  double deviate = 0.0;
  bool degenerate = false;  // null variance was zero
};

// Normal-approximation randomization p-value; for gamma > 1 the worst-case
// (largest) p over the sensitivity model for the requested tail.
test_result permutation_test(std::span<const study_set> sets, double tau0, double gamma,
                             tail side);

double point_estimate(std::span<const study_set> sets);

// Test-inversion interval {tau0 : two-sided p(tau0) > alpha}; endpoints by
// bisection to 1e-6 of the outcome scale. Unbounded sides come back infinite.
std::pair<double, double> confidence_interval(std::span<const study_set> sets, double alpha,
                                              double gamma);

struct gamma_star_result {
  bool applicable = false;  // false when p(1) > alpha
  double value = 1.0;
  bool capped = false;  // significant beyond gamma 10
};

gamma_star_result gamma_star(std::span<const study_set> sets, double alpha, tail side,
                             double tau0 = 0.0);

// Panel-level wrappers over the study-set core.
struct did_result {
  std::string outcome;
  horizon h = horizon::month;
  double estimate = 0.0;
  double p_value = 1.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  gamma_star_result gamma;
  int sets_used = 0;
  int sets_excluded = 0;
};

did_result estimate_outcome(const matched_design& design, const panel_dataset& d,
                            const std::string& outcome, horizon h, double alpha, tail side);

}  // namespace riskdid
