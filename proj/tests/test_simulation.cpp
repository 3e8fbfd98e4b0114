#include <cmath>
#include <map>

#include "doctest.h"
#include "riskdid/simulation.hpp"
#include "testutil.hpp"

using namespace riskdid;

TEST_CASE("simulate_instance: average treated-minus-control contrast matches tau") {
  sim_scenario scn;
  scn.n_treated = 2000;
  scn.seed = 3;
  sim_instance inst = simulate_instance(scn, derive_seed(scn.seed, 90000));
  REQUIRE(inst.sets.size() == 2000);
  double total = 0.0;
  for (const auto& s : inst.sets) total += s.observed_contribution(0.0);
  double mean_contrast = total / 2000.0;
  // var of one contrast ~ 2 + 1/m; 3 MC SEs
  CHECK(std::fabs(mean_contrast - 0.5) <= 3.0 * std::sqrt(2.25 / 2000.0));
}

TEST_CASE("simulate_instance: set sizes follow the configured probabilities") {
  sim_scenario scn;
  scn.n_treated = 5000;
  scn.seed = 9;
  sim_instance inst = simulate_instance(scn, derive_seed(scn.seed, 1));
  std::map<std::size_t, int> hist;
  for (const auto& s : inst.sets) hist[s.quantities.size() - 1]++;
  for (std::size_t m = 1; m <= 5; ++m) {
    double p = scn.set_size_probs[m - 1];
    double rate = static_cast<double>(hist[m]) / 5000.0;
    CHECK(std::fabs(rate - p) <= 3.0 * std::sqrt(p * (1.0 - p) / 5000.0) + 1e-9);
  }
}

TEST_CASE("simulate_instance is reproducible under the replication seed") {
  sim_scenario scn;
  scn.n_treated = 50;
  scn.seed = 4;
  sim_instance a = simulate_instance(scn, 12345);
  sim_instance b = simulate_instance(scn, 12345);
  REQUIRE(a.sets.size() == b.sets.size());
  for (std::size_t i = 0; i < a.sets.size(); ++i) {
    CHECK(a.sets[i].quantities == b.sets[i].quantities);
    CHECK(a.sets[i].numeric_features == b.sets[i].numeric_features);
  }
  sim_instance c = simulate_instance(scn, 12346);
  CHECK(a.sets[0].quantities != c.sets[0].quantities);
}

TEST_CASE("fully-null scenario rejects at no more than alpha") {
  sim_scenario scn;
  scn.label = "null";
  scn.n_treated = 400;
  scn.tau = {0.5, 0.5, 0.5, 0.5};
  scn.replications = 120;
  scn.seed = 77;
  power_study_params params;
  params.mc_draws = 100000;
  params.grid_points = 41;
  power_cell cell = run_power_cell(scn, params);
  double bound = scn.alpha + 3.0 * std::sqrt(scn.alpha * (1.0 - scn.alpha) / scn.replications);
  CHECK(cell.global_rate <= bound);
  CHECK(cell.any_leaf_rate <= bound);
}

TEST_CASE("power report is deterministic under the master seed") {
  sim_scenario scn;
  scn.label = "det";
  scn.n_treated = 200;
  scn.tau = {0.3, 0.3, 0.7, 0.7};
  scn.replications = 30;
  scn.seed = 5;
  power_study_params params;
  params.mc_draws = 100000;
  params.grid_points = 21;
  params.threads = 2;
  power_cell a = run_power_cell(scn, params);
  power_cell b = run_power_cell(scn, params);
  CHECK(a.global_rate == b.global_rate);
  CHECK(a.any_leaf_rate == b.any_leaf_rate);
}

TEST_CASE("benchmark grid enumerates five rows by three splits") {
  auto grid = benchmark_power_grid(2000, 1000, 1);
  CHECK(grid.size() == 15);
  CHECK(grid[0].label == "small_none");
  CHECK(grid[0].discovery_fraction == doctest::Approx(0.10));
  CHECK(grid[14].label == "moderate_moderate");
  CHECK(grid[14].discovery_fraction == doctest::Approx(0.50));
  for (const auto& scn : grid) {
    double avg = (scn.tau[0] + scn.tau[1] + scn.tau[2] + scn.tau[3]) / 4.0;
    CHECK(avg == doctest::Approx(0.5));
  }
}

TEST_CASE("power report JSON carries the version tag") {
  power_report report;
  power_cell cell;
  cell.label = "x";
  cell.replications = 10;
  report.cells.push_back(cell);
  CHECK(power_report_to_json(report).find("power/v1") != std::string::npos);
}
