#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "riskdid/exports.hpp"
#include "testutil.hpp"

using namespace riskdid;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "riskdid_fmt";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("results table: column layout matches the published format") {
  did_result r;
  r.outcome = "spending";
  r.h = horizon::month;
  r.estimate = 27100.0;
  r.p_value = 0.0042;
  r.ci_lower = 26364.0;
  r.ci_upper = 27829.0;
  r.gamma.applicable = true;
  r.gamma.capped = true;
  csv_table t = results_table({r});
  CHECK(t.header == std::vector<std::string>{"outcome", "horizon", "estimate", "p_value",
                                             "ci_lower", "ci_upper", "gamma_star"});
  CHECK(t.rows[0][0] == "spending");
  CHECK(t.rows[0][1] == "month");
  CHECK(t.rows[0][6] == ">10.00");
}

TEST_CASE("gamma rendering: NA for nonsignificant, >10.00 beyond the cap, 2 decimals") {
  gamma_star_result na;
  CHECK(render_gamma(na) == "NA");

  gamma_star_result capped;
  capped.applicable = true;
  capped.capped = true;
  CHECK(render_gamma(capped) == ">10.00");

  gamma_star_result mid;
  mid.applicable = true;
  mid.value = 3.8671;
  CHECK(render_gamma(mid) == "3.87");

  gamma_star_result unity;
  unity.applicable = true;
  unity.value = 1.0;
  CHECK(render_gamma(unity) == "1.00");
}

TEST_CASE("design CSV round-trips through write and read") {
  matched_design design;
  design.spec.exact_covariates = {"sex"};
  design.spec.calipers = {{"age", 2.5}, {"risk_score", 0.5}};
  design.spec.max_controls = 5;
  design.sets.push_back({1, 3, "tA", {"c1", "c2"}});
  design.sets.push_back({2, 5, "tB", {"c3"}});
  design.audit.set_size_histogram[2] = 1;
  design.audit.set_size_histogram[1] = 1;

  std::string csv = temp_path("design.csv");
  std::string audit = temp_path("design_audit.json");
  write_design(design, csv, audit);

  matched_design back = read_design(csv, audit);
  REQUIRE(back.sets.size() == 2);
  CHECK(back.sets[0].treated_unit == "tA");
  CHECK(back.sets[0].control_units == std::vector<std::string>{"c1", "c2"});
  CHECK(back.sets[1].exposure_time == 5);
  CHECK(back.spec.calipers.size() == 2);
  CHECK(back.spec.calipers[0].covariate == "age");
  CHECK(back.spec.calipers[0].width == 2.5);

  std::string audit_text = slurp(audit);
  CHECK(audit_text.find("design/v1") != std::string::npos);
}

TEST_CASE("balance table columns") {
  balance_report report;
  report.rows.push_back({"age", "all", 34.3, 34.2, 10.0, 0.01, false});
  csv_table t = balance_table(report);
  CHECK(t.header == std::vector<std::string>{"covariate", "subgroup", "treated_mean",
                                             "control_mean", "pooled_sd", "asamd", "flag"});
  CHECK(t.rows[0][0] == "age");
  CHECK(t.rows[0][5] == "0.01");
}

TEST_CASE("submax table columns and flags") {
  submax_result result;
  result.gamma = 1.5;
  comparison_outcome c;
  c.label = "icu=yes";
  c.minmax_deviate = 3.21;
  c.kappa = 2.48;
  c.rejected = true;
  result.per_comparison.push_back(c);
  csv_table t = submax_table(result);
  CHECK(t.header ==
        std::vector<std::string>{"comparison", "deviate", "kappa", "rejected", "gamma"});
  CHECK(t.rows[0][0] == "icu=yes");
  CHECK(t.rows[0][3] == "yes");
  CHECK(t.rows[0][4] == "1.50");
}

TEST_CASE("power table mirrors the study layout") {
  power_report report;
  power_cell cell;
  cell.label = "large_none";
  cell.tau = {0.3, 0.3, 0.7, 0.7};
  cell.discovery_fraction = 0.25;
  cell.global_rate = 0.9;
  cell.mc_se = 0.0095;
  cell.any_leaf_rate = 0.8;
  cell.replications = 1000;
  report.cells.push_back(cell);
  csv_table t = power_table(report);
  CHECK(t.header ==
        std::vector<std::string>{"scenario", "tau00", "tau01", "tau10", "tau11", "split",
                                 "global_rate", "mc_se", "any_comparison_rate", "replications"});
  CHECK(t.rows[0][5] == "25/75");
  CHECK(t.rows[0][9] == "1000");
}

TEST_CASE("sensitivity and r2 tables") {
  csv_table s = sensitivity_table({{"y", horizon::year, 1.5, 0.032}});
  CHECK(s.header == std::vector<std::string>{"outcome", "horizon", "gamma", "p_value"});
  CHECK(s.rows[0][1] == "year");
  CHECK(s.rows[0][2] == "1.50");

  r2_bounds b;
  b.lower = 0.019;
  b.upper = 0.022;
  csv_table t = r2_table({{"spending", horizon::month, b}});
  CHECK(t.header == std::vector<std::string>{"outcome", "horizon", "lower", "upper", "flag"});
  CHECK(t.rows[0][2] == "0.019");
  CHECK(t.rows[0][3] == "0.022");
}

TEST_CASE("NaN values render as NA in tables") {
  did_result r;
  r.outcome = "y";
  r.estimate = std::numeric_limits<double>::quiet_NaN();
  csv_table t = results_table({r});
  CHECK(t.rows[0][2] == "NA");
}

TEST_CASE("csv escaping round-trips awkward fields") {
  csv_table t;
  t.header = {"a", "b"};
  t.rows.push_back({"plain", "with,comma"});
  t.rows.push_back({"with\"quote", "tail"});
  std::string path = temp_path("escape.csv");
  write_csv(path, t);
  csv_table back = read_csv(path);
  CHECK(back.rows[0][1] == "with,comma");
  CHECK(back.rows[1][0] == "with\"quote");
}
