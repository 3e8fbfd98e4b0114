#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "riskdid/matching.hpp"
#include "riskdid/panel.hpp"

namespace riskdid {

enum class horizon { month, year };

std::string horizon_name(horizon h);
horizon parse_horizon(const std::string& s);

// One matched set reduced to its per-member first-difference quantities.
// quantities[observed_index] belongs to the treated unit. Month uses
// Y_t - Y_{t-1}; Year uses the mean of the 12 monthly first differences,
// which telescopes to (Y_{t+11} - Y_{t-1}) / 12.
struct study_set {
  int set_id = 0;
  std::vector<double> quantities;
  std::size_t observed_index = 0;
  // treated unit's covariates at the matching time, for subgroup discovery
  std::map<std::string, double> numeric_features;
  std::map<std::string, std::string> label_features;

  std::size_t size() const { return quantities.size(); }
  // assignment scores under H: effect = tau0. The hypothesized effect is
  // removed from the observed treated unit's quantity; each score is then
  // that unit's adjusted quantity minus the mean of the others'.
  void assignment_scores(double tau0, std::vector<double>& out) const;
  double observed_contribution(double tau0) const;
};

// Spec-facing view of one set's scores at a fixed null.
struct set_contrasts {
  int set_id = 0;
  std::vector<double> assignment_scores;
  std::size_t observed_index = 0;
};

set_contrasts set_contrast(const matched_set& set, const panel_dataset& d,
                           const std::string& outcome, horizon h, double tau0);

struct contrast_study {
  std::vector<study_set> sets;
  std::vector<int> excluded_set_ids;  // horizons falling outside the panel
};

// Builds per-set quantities for a whole design; sets whose horizon spills
// past the panel are excluded and listed, not truncated. feature_covariates
// names panel covariates to carry along for discovery (empty = none).
contrast_study build_study(const matched_design& design, const panel_dataset& d,
                           const std::string& outcome, horizon h,
                           const std::vector<std::string>& feature_covariates = {});

}  // namespace riskdid
