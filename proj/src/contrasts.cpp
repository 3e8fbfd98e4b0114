#include "riskdid/contrasts.hpp"

#include <cmath>

#include "riskdid/errors.hpp"

namespace riskdid {

std::string horizon_name(horizon h) { return h == horizon::month ? "month" : "year"; }

horizon parse_horizon(const std::string& s) {
  if (s == "month") return horizon::month;
  if (s == "year") return horizon::year;
  fail(errc::config, "horizon must be 'month' or 'year', got '" + s + "'");
}

void study_set::assignment_scores(double tau0, std::vector<double>& out) const {
  std::size_t n = quantities.size();
  out.resize(n);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) total += quantities[j];
  total -= tau0;  // adjusted treated quantity
  for (std::size_t j = 0; j < n; ++j) {
    double adj = quantities[j] - (j == observed_index ? tau0 : 0.0);
    double others_mean = (total - adj) / static_cast<double>(n - 1);
    out[j] = adj - others_mean;
  }
}

double study_set::observed_contribution(double tau0) const {
  std::size_t n = quantities.size();
  double total = 0.0;
  for (double q : quantities) total += q;
  double adj = quantities[observed_index] - tau0;
  return adj - (total - quantities[observed_index]) / static_cast<double>(n - 1);
}

namespace {

double quantity_for(const unit_record& u, const std::string& outcome, horizon h, int t_i,
                    int t_max, int set_id) {
  if (h == horizon::month) {
    if (t_i - 1 < 1 || t_i > t_max)
      fail(errc::truncated_horizon,
           "set " + std::to_string(set_id) + ": month horizon outside panel");
    return u.outcome_at(outcome, t_i) - u.outcome_at(outcome, t_i - 1);
  }
  if (t_i - 1 < 1 || t_i + 11 > t_max)
    fail(errc::truncated_horizon,
         "set " + std::to_string(set_id) + ": year horizon outside panel");
  return (u.outcome_at(outcome, t_i + 11) - u.outcome_at(outcome, t_i - 1)) / 12.0;
}

study_set build_one(const matched_set& set, const panel_dataset& d, const std::string& outcome,
                    horizon h, const std::vector<std::string>& feature_covariates) {
  study_set out;
  out.set_id = set.set_id;
  int t_i = set.exposure_time;
  const unit_record& treated = d.units[d.index_of(set.treated_unit)];
  out.quantities.push_back(quantity_for(treated, outcome, h, t_i, d.t_max, set.set_id));
  out.observed_index = 0;
  for (const auto& cid : set.control_units) {
    const unit_record& c = d.units[d.index_of(cid)];
    out.quantities.push_back(quantity_for(c, outcome, h, t_i, d.t_max, set.set_id));
  }
  int mt = set.match_time();
  for (const auto& name : feature_covariates) {
    auto cit = treated.continuous.find(name);
    if (cit != treated.continuous.end()) {
      double v = cit->second[static_cast<std::size_t>(mt - 1)];
      if (!std::isnan(v)) out.numeric_features[name] = v;
      continue;
    }
    auto kit = treated.categorical.find(name);
    if (kit != treated.categorical.end()) {
      const std::string& label = kit->second.at(mt);
      if (!label.empty()) out.label_features[name] = label;
    }
  }
  return out;
}

}  // namespace

set_contrasts set_contrast(const matched_set& set, const panel_dataset& d,
                           const std::string& outcome, horizon h, double tau0) {
  study_set s = build_one(set, d, outcome, h, {});
  set_contrasts out;
  out.set_id = set.set_id;
  out.observed_index = s.observed_index;
  s.assignment_scores(tau0, out.assignment_scores);
  return out;
}

contrast_study build_study(const matched_design& design, const panel_dataset& d,
                           const std::string& outcome, horizon h,
                           const std::vector<std::string>& feature_covariates) {
  contrast_study study;
  for (const auto& set : design.sets) {
    try {
      study.sets.push_back(build_one(set, d, outcome, h, feature_covariates));
    } catch (const error& e) {
      if (e.code() != errc::truncated_horizon) throw;
      study.excluded_set_ids.push_back(set.set_id);
    }
  }
  return study;
}

}  // namespace riskdid
