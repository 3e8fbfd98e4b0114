#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "riskdid/panel.hpp"

namespace riskdid {

struct caliper {
  std::string covariate;
  double width = 0.0;  // delta_k, in the covariate's own units
};

struct match_spec {
  std::vector<std::string> exact_covariates;
  std::vector<caliper> calipers;
  int max_controls = 5;
  int min_controls = 1;

  void validate() const;
};

struct matched_set {
  int set_id = 0;
  int exposure_time = 0;
  std::string treated_unit;
  std::vector<std::string> control_units;  // 1..max_controls, sorted by id

  // covariates enter matching as of the last pre-exposure period
  int match_time() const { return exposure_time - 1; }
};

struct drop_record {
  std::string unit_id;
  int time = 0;
  std::string reason;  // "infeasible" | "consumed_as_control" | "no_pre_period"
};

struct design_audit {
  struct time_row {
    int time = 0;
    int exposed = 0;
    int matched = 0;
    int dropped = 0;
  };
  std::vector<time_row> per_time;
  std::map<int, int> set_size_histogram;  // controls per set -> count
  std::vector<drop_record> dropped;
};

struct matched_design {
  std::vector<matched_set> sets;
  match_spec spec;
  design_audit audit;

  const matched_set& set_by_id(int set_id) const;
};

// exposed / not-yet-exposed unit indices per exposure time, before any
// matching consumption
struct risk_set {
  std::vector<std::size_t> exposed;
  std::vector<std::size_t> eligible;
};

std::map<int, risk_set> build_risk_sets(const panel_dataset& d);

struct profile_match_result {
  bool feasible = false;
  std::vector<std::size_t> controls;  // indices into d.units
};

// Largest subset of the exact-matched pool whose caliper-covariate means sit
// within the calipers of the treated unit's profile. Exhaustive for pools of
// at most 25 exact-matched candidates, beam search beyond that.
profile_match_result profile_match_one(const panel_dataset& d, std::size_t treated,
                                       std::span<const std::size_t> pool,
                                       const match_spec& spec, int t);

matched_design run_risk_set_matching(const panel_dataset& d, const match_spec& spec);

struct balance_row {
  std::string covariate;  // continuous name, or "name=level" for categoricals
  std::string subgroup;
  double treated_mean = 0.0;
  double control_mean = 0.0;
  double pooled_sd = 0.0;
  double asamd = 0.0;
  bool degenerate_scale = false;
};

struct balance_report {
  std::vector<balance_row> rows;
};

balance_report compute_asamd(const matched_design& design, const panel_dataset& d,
                             const std::function<bool(const matched_set&)>& subgroup,
                             const std::string& subgroup_label);

struct aggregation_bound_result {
  double bound = 0.0;
  double attained = 0.0;
};

// Theoretical aggregate-imbalance bound for a subset of matched sets:
// delta_k when the sets share one size, otherwise the varying-size bound
// with weights w_j = m_j |J*| / sum m_j.
aggregation_bound_result aggregation_balance_bound(const matched_design& design,
                                                   const panel_dataset& d,
                                                   std::span<const int> set_ids,
                                                   const std::string& covariate);

}  // namespace riskdid
