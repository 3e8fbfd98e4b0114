#include "riskdid/simulation.hpp"

#include <atomic>
#include <cmath>

#include "json.hpp"
#include "riskdid/errors.hpp"
#include "riskdid/parallel.hpp"
#include "riskdid/rand.hpp"

namespace riskdid {

void sim_scenario::validate() const {
  if (n_treated < 1) fail(errc::config, "n_treated must be positive");
  if (replications < 1) fail(errc::config, "replications must be positive");
  if (set_size_probs.empty()) fail(errc::config, "set_size_probs empty");
  double total = 0.0;
  for (double p : set_size_probs) {
    if (p < 0.0) fail(errc::config, "negative set size probability");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) fail(errc::config, "set size probabilities must sum to 1");
  if (n_covariates < 2) fail(errc::config, "need at least x1 and x2");
  if (!(discovery_fraction > 0.0 && discovery_fraction < 1.0))
    fail(errc::config, "discovery fraction must lie in (0,1)");
  if (!(alpha > 0.0 && alpha < 1.0) || !(alpha1 > 0.0 && alpha1 < alpha))
    fail(errc::config, "need 0 < alpha1 < alpha < 1");
}

sim_instance simulate_instance(const sim_scenario& scn, std::uint64_t rep_seed) {
  scn.validate();
  rng r(rep_seed);
  sim_instance inst;
  inst.sets.reserve(static_cast<std::size_t>(scn.n_treated));
  for (int i = 0; i < scn.n_treated; ++i) {
    study_set s;
    s.set_id = i + 1;
    std::size_t m = r.categorical(scn.set_size_probs) + 1;  // controls

    std::vector<int> x(static_cast<std::size_t>(scn.n_covariates));
    for (auto& v : x) v = r.bernoulli(0.5) ? 1 : 0;
    std::size_t cell = static_cast<std::size_t>(2 * x[0] + x[1]);

    // the unit's effect draw N(tau_ab, 1) is its treated-state contrast;
    // controls contribute iid standard normal contrasts
    s.quantities.push_back(r.normal(scn.tau[cell], 1.0));
    s.observed_index = 0;
    for (std::size_t j = 0; j < m; ++j) s.quantities.push_back(r.normal());
    for (int c = 0; c < scn.n_covariates; ++c)
      s.numeric_features["x" + std::to_string(c + 1)] =
          static_cast<double>(x[static_cast<std::size_t>(c)]);
    inst.sets.push_back(std::move(s));
  }
  return inst;
}

power_cell run_power_cell(const sim_scenario& scn, const power_study_params& params) {
  scn.validate();
  power_cell cell;
  cell.label = scn.label;
  cell.tau = scn.tau;
  cell.discovery_fraction = scn.discovery_fraction;
  cell.replications = scn.replications;

  std::vector<std::string> covariates;
  for (int c = 0; c < scn.n_covariates; ++c) covariates.push_back("x" + std::to_string(c + 1));

  std::atomic<int> global_hits{0}, leaf_hits{0};
  parallel_for(static_cast<std::size_t>(scn.replications), params.threads, [&](std::size_t rep) {
    std::uint64_t rep_seed = derive_seed(scn.seed, 90000 + rep);
    sim_instance inst = simulate_instance(scn, rep_seed);

    split_plan plan;
    plan.discovery_fraction = scn.discovery_fraction;
    plan.seed = derive_seed(rep_seed, 1);

    submax_options options;
    options.alpha = scn.alpha;
    options.alpha1 = scn.alpha1;
    options.gamma = 1.0;
    options.two_sided = true;
    options.grid_points = params.grid_points;
    options.mc_draws = params.mc_draws;
    options.seed = derive_seed(rep_seed, 2);
    options.report_kappa = false;

    discovery_result res =
        discover_and_confirm(inst.sets, plan, covariates, params.cart, options);
    if (res.confirmation.global_reject) global_hits.fetch_add(1);
    bool any_leaf = false;
    for (const auto& pc : res.confirmation.per_comparison) any_leaf = any_leaf || pc.rejected;
    if (any_leaf) leaf_hits.fetch_add(1);
  });

  double n = static_cast<double>(scn.replications);
  cell.global_rate = static_cast<double>(global_hits.load()) / n;
  cell.any_leaf_rate = static_cast<double>(leaf_hits.load()) / n;
  cell.mc_se = std::sqrt(cell.global_rate * (1.0 - cell.global_rate) / n);
  return cell;
}

power_report run_power_study(const std::vector<sim_scenario>& scenarios,
                             const power_study_params& params) {
  power_report report;
  for (const auto& scn : scenarios) report.cells.push_back(run_power_cell(scn, params));
  return report;
}

std::vector<sim_scenario> benchmark_power_grid(int n_treated, int replications, std::uint64_t seed) {
  struct row {
    const char* label;
    std::array<double, 4> tau;
  };
  const row rows[] = {
      {"small_none", {0.4, 0.4, 0.6, 0.6}},
      {"large_none", {0.3, 0.3, 0.7, 0.7}},
      {"small_small", {0.4, 0.4, 0.5, 0.7}},
      {"large_small", {0.3, 0.3, 0.6, 0.8}},
      {"moderate_moderate", {0.2, 0.5, 0.5, 0.8}},
  };
  const double splits[] = {0.10, 0.25, 0.50};

  std::vector<sim_scenario> out;
  std::uint64_t stream = 0;
  for (const auto& r : rows) {
    for (double frac : splits) {
      sim_scenario scn;
      scn.label = r.label;
      scn.tau = r.tau;
      scn.n_treated = n_treated;
      scn.replications = replications;
      scn.discovery_fraction = frac;
      scn.seed = derive_seed(seed, 31000 + stream++);
      out.push_back(std::move(scn));
    }
  }
  return out;
}

std::string power_report_to_json(const power_report& report) {
  nlohmann::json j;
  j["version"] = "power/v1";
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json jc;
    jc["label"] = c.label;
    jc["tau"] = c.tau;
    jc["discovery_fraction"] = c.discovery_fraction;
    jc["global_rate"] = c.global_rate;
    jc["any_comparison_rate"] = c.any_leaf_rate;
    jc["mc_se"] = c.mc_se;
    jc["replications"] = c.replications;
    cells.push_back(std::move(jc));
  }
  j["cells"] = std::move(cells);
  return j.dump(2);
}

}  // namespace riskdid
