#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace riskdid {

// A categorical covariate is either constant for the unit or has one label
// per time index (empty string = not observed at that time).
struct categorical_series {
  std::string constant;
  std::vector<std::string> per_time;

  bool varying() const { return !per_time.empty(); }
  const std::string& at(int t) const {
    return varying() ? per_time[static_cast<std::size_t>(t - 1)] : constant;
  }
};

struct unit_record {
  std::string id;
  std::optional<int> exposure;  // time of exposure in 1..T, nullopt = never
  std::map<std::string, categorical_series> categorical;
  // continuous covariates and outcomes are dense over 1..T; continuous
  // entries may be NaN after exposure, outcomes never
  std::map<std::string, std::vector<double>> continuous;
  std::map<std::string, std::vector<double>> outcomes;

  double outcome_at(const std::string& name, int t) const;
  double continuous_at(const std::string& name, int t) const;
  const std::string& categorical_at(const std::string& name, int t) const;
};

// Rectangular long panel over integer times 1..t_max. Input time labels are
// kept so files round-trip exactly.
struct panel_dataset {
  int t_max = 0;
  std::vector<long> time_labels;  // size t_max, strictly increasing
  std::vector<std::string> outcome_names;
  std::vector<std::string> categorical_names;
  std::vector<std::string> continuous_names;
  std::vector<unit_record> units;  // sorted by id
  std::unordered_map<std::string, std::size_t> unit_index;

  const unit_record& unit(std::size_t i) const { return units[i]; }
  std::size_t index_of(const std::string& id) const;
  void rebuild_index();
};

struct panel_schema {
  // column names for the three input files
  std::string outcome_unit = "unit_id", outcome_time = "time",
              outcome_name = "outcome", outcome_value = "value";
  std::string cov_unit = "unit_id", cov_time = "time", cov_name = "covariate",
              cov_value = "value";
  std::string exp_unit = "unit_id", exp_time = "exposure_time";
  std::string never_token;  // exposure value meaning "never"; empty field always works
  std::vector<std::string> categorical;
  std::vector<std::string> continuous;
};

panel_schema parse_panel_schema(const std::string& schema_json);

panel_dataset load_panel(const std::string& outcome_file, const std::string& covariate_file,
                         const std::string& exposure_file, const panel_schema& schema);

// Writes outcomes.csv / covariates.csv / exposures.csv / panel.json under dir.
void write_panel(const panel_dataset& d, const std::string& dir);

std::string panel_to_json(const panel_dataset& d);        // "panel/v1"
panel_dataset panel_from_json(const std::string& json_text);

struct validation_issue {
  std::string kind;
  std::string detail;
};

struct validation_report {
  std::vector<validation_issue> issues;
  bool ok() const { return issues.empty(); }
};

validation_report validate_panel(const panel_dataset& d);

}  // namespace riskdid
