#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "riskdid/csv.hpp"
#include "riskdid/discovery.hpp"
#include "riskdid/inference.hpp"
#include "riskdid/matching.hpp"
#include "riskdid/simulation.hpp"
#include "riskdid/submax.hpp"

namespace riskdid {

// Table rendering conventions: gamma is reported to two decimals, "NA" when
// the finding is not significant at gamma = 1, ">10.00" when it survives
// beyond the reporting cap.
std::string render_gamma(const gamma_star_result& g);
std::string render_fixed(double v, int decimals);

csv_table results_table(const std::vector<did_result>& results);
void write_results_csv(const std::string& path, const std::vector<did_result>& results);

void write_design(const matched_design& design, const std::string& csv_path,
                  const std::string& audit_json_path);
matched_design read_design(const std::string& csv_path, const std::string& audit_json_path);

csv_table balance_table(const balance_report& report);
void write_balance_csv(const std::string& path, const balance_report& report);

csv_table submax_table(const submax_result& result);
void write_submax(const submax_result& result, const std::string& csv_path,
                  const std::string& summary_json_path);

csv_table power_table(const power_report& report);
void write_power(const power_report& report, const std::string& csv_path,
                 const std::string& json_path);

struct sensitivity_row {
  std::string outcome;
  horizon h = horizon::month;
  double gamma = 1.0;
  double p_value = 1.0;
};

csv_table sensitivity_table(const std::vector<sensitivity_row>& rows);
void write_sensitivity_csv(const std::string& path, const std::vector<sensitivity_row>& rows);

csv_table r2_table(const std::vector<std::tuple<std::string, horizon, r2_bounds>>& rows);
void write_r2_csv(const std::string& path,
                  const std::vector<std::tuple<std::string, horizon, r2_bounds>>& rows);

void write_leaf_csv(const std::string& path, const discovery_result& result);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace riskdid
