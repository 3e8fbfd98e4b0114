#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "riskdid/discovery.hpp"

namespace riskdid {

// One cell of the simulated-power study: matched sets of varying size with
// set-level contrasts drawn directly. The treated contrast is a standard
// normal baseline plus a unit effect ~ N(tau_ab, 1) keyed by the binary
// modifiers (x1, x2); controls are iid standard normal.
struct sim_scenario {
  std::string label;
  int n_treated = 2000;
  std::vector<double> set_size_probs = {0.025, 0.025, 0.05, 0.1, 0.8};  // 1..5 controls
  std::array<double, 4> tau = {0.5, 0.5, 0.5, 0.5};  // tau_00, tau_01, tau_10, tau_11
  int n_covariates = 5;                              // x1..x5, iid Bernoulli(0.5)
  double discovery_fraction = 0.25;
  int replications = 1000;
  double alpha = 0.05;
  // alpha split for the confirmation stage: a narrow slice buys the CI grid,
  // the rest goes to the max-deviate test (level alpha for any split)
  double alpha1 = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

struct sim_instance {
  std::vector<study_set> sets;
};

sim_instance simulate_instance(const sim_scenario& scn, std::uint64_t rep_seed);

struct power_cell {
  std::string label;
  std::array<double, 4> tau{};
  double discovery_fraction = 0.0;
  double global_rate = 0.0;      // global effect-modification rejections
  double any_leaf_rate = 0.0;    // any closed-testing comparison rejection
  double mc_se = 0.0;            // binomial SE of global_rate
  int replications = 0;
};

struct power_report {
  std::vector<power_cell> cells;
};

struct power_study_params {
  cart_params cart;
  long mc_draws = 100000;
  int grid_points = 101;
  unsigned threads = 0;  // 0 = all hardware threads

  power_study_params() {
    // harness defaults: no relative pruning, chi-square-style gain floor so
    // discovery sensitivity scales with the split's sample size
    cart.complexity = 0.0;
    cart.gain_sigma2_scale = 7.0;
  }
};

// Replications of simulate -> split -> CART -> submax closed testing;
// per-replication seeds derive from the scenario seed, so results do not
// depend on scheduling.
power_cell run_power_cell(const sim_scenario& scn, const power_study_params& params);

power_report run_power_study(const std::vector<sim_scenario>& scenarios,
                             const power_study_params& params);

// Benchmark study grid: five effect-modification settings by three split ratios.
std::vector<sim_scenario> benchmark_power_grid(int n_treated, int replications, std::uint64_t seed);

std::string power_report_to_json(const power_report& report);  // "power/v1"

}  // namespace riskdid
