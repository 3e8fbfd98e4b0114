#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "riskdid/panel.hpp"

namespace riskdid {

// Distribution spec for scalar draws. Families: "point" (constant at mean),
// "normal", "uniform" (mean +/- half_width stored in sd).
struct dist_spec {
  std::string family = "point";
  double mean = 0.0;
  double sd = 0.0;
};

struct synth_covariate {
  std::string name;
  bool is_categorical = false;
  // categorical
  std::vector<std::string> levels;
  std::vector<double> probs;
  // continuous: baseline draw plus optional per-period random walk
  dist_spec base;
  double walk_sd = 0.0;
};

// Exposure hazard: per-period log-odds of newly becoming exposed is
// intercept + sum(slope * continuous covariate) + categorical shifts +
// gamma * u, where u is the unit's latent unobserved covariate at t.
struct hazard_spec {
  double intercept = -4.0;
  std::map<std::string, double> slopes;
  std::map<std::string, std::map<std::string, double>> cat_shifts;
  double gamma = 0.0;
  int start = 2;  // earliest period at which exposure can occur
};

// Treatment effect applied to outcomes at t >= exposure: level shift of
// base + covariate terms, evaluated on the unit's baseline covariates.
struct effect_spec {
  double base = 0.0;
  std::map<std::string, double> slopes;
  std::map<std::string, std::map<std::string, double>> cat_shifts;
};

struct synth_config {
  int n_units = 0;
  int t_max = 0;
  std::vector<std::string> outcome_names = {"y"};
  dist_spec baseline;          // per-unit intercept mu_i
  dist_spec time_shock;        // common shock alpha_t, one draw per period
  dist_spec cohort_shock;      // beta_z, one draw per exposure cohort
  dist_spec noise;             // eps_t(x, u)
  std::map<std::string, double> noise_loadings;  // adds loading * covariate to the noise mean
  std::vector<synth_covariate> covariates;
  hazard_spec hazard;
  effect_spec effect;
  std::uint64_t seed = 0;
  // testing hook: force specific units' exposure times (id -> time or never)
  std::map<std::string, std::optional<int>> force_exposure;
};

synth_config parse_synth_config(const std::string& json_text);
std::string synth_config_to_json(const synth_config& cfg);

panel_dataset synth_generate(const synth_config& cfg);

}  // namespace riskdid
