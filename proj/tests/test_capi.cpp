// Exercises the shared-library C surface and the CLI binary end to end.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "riskdid.h"

namespace {

namespace fs = std::filesystem;

std::string temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("riskdid_capi_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

const char* kSynthConfig = R"({
  "n_units": 500, "t_max": 8, "seed": 42,
  "baseline": {"family": "normal", "mean": 0, "sd": 1},
  "noise": {"family": "normal", "mean": 0, "sd": 1},
  "hazard": {"intercept": -2.5},
  "effect": {"base": 2.0, "cat_shifts": {"sex": {"f": 1.5}}},
  "covariates": [
    {"name": "age", "kind": "continuous", "base": {"family": "normal", "mean": 40, "sd": 10}},
    {"name": "risk_score", "kind": "continuous", "base": {"family": "normal", "mean": 1, "sd": 0.4}},
    {"name": "sex", "kind": "categorical", "levels": ["f", "m"], "probs": [0.5, 0.5]}
  ]
})";

const char* kMatchSpec =
    R"({"exact": ["sex"], "calipers": {"age": 2.5, "risk_score": 0.5}, "max_controls": 5})";

struct panel_guard {
  rsd_panel* p = nullptr;
  ~panel_guard() { rsd_panel_free(p); }
};

struct design_guard {
  rsd_design* d = nullptr;
  ~design_guard() { rsd_design_free(d); }
};

}  // namespace

TEST_CASE("C API: generate, match, estimate pipeline") {
  std::string dir = temp_dir("pipeline");

  panel_guard panel;
  REQUIRE(rsd_panel_generate(kSynthConfig, &panel.p) == RSD_OK);

  char* report = nullptr;
  REQUIRE(rsd_panel_validate(panel.p, &report) == RSD_OK);
  std::string report_text = report;
  rsd_string_free(report);
  CHECK(report_text.find("\"ok\": true") != std::string::npos);

  REQUIRE(rsd_panel_write(panel.p, (dir + "/panel").c_str()) == RSD_OK);
  CHECK(fs::exists(dir + "/panel/outcomes.csv"));
  CHECK(fs::exists(dir + "/panel/panel.json"));

  design_guard design;
  REQUIRE(rsd_match_run(panel.p, kMatchSpec, &design.d) == RSD_OK);
  REQUIRE(rsd_design_write(design.d, (dir + "/design.csv").c_str(),
                           (dir + "/design_audit.json").c_str()) == RSD_OK);
  CHECK(slurp(dir + "/design_audit.json").find("design/v1") != std::string::npos);

  REQUIRE(rsd_balance_write(design.d, panel.p, (dir + "/balance.csv").c_str()) == RSD_OK);
  CHECK(slurp(dir + "/balance.csv").find("asamd") != std::string::npos);

  REQUIRE(rsd_estimate_write(design.d, panel.p, R"({"horizons": ["month"]})",
                             (dir + "/results.csv").c_str()) == RSD_OK);
  std::string results = slurp(dir + "/results.csv");
  CHECK(results.find("outcome,horizon,estimate,p_value,ci_lower,ci_upper,gamma_star") !=
        std::string::npos);

  // the design reloads and produces the same estimates
  design_guard reread;
  REQUIRE(rsd_design_read((dir + "/design.csv").c_str(), (dir + "/design_audit.json").c_str(),
                          &reread.d) == RSD_OK);
  REQUIRE(rsd_estimate_write(reread.d, panel.p, R"({"horizons": ["month"]})",
                             (dir + "/results2.csv").c_str()) == RSD_OK);
  CHECK(slurp(dir + "/results2.csv") == results);

  REQUIRE(rsd_sensitivity_write(design.d, panel.p,
                                R"({"horizons": ["month"], "gammas": [1, 2]})",
                                (dir + "/sens.csv").c_str()) == RSD_OK);
  CHECK(slurp(dir + "/sens.csv").find("gamma,p_value") != std::string::npos);

  REQUIRE(rsd_submax_write(design.d, panel.p,
                           R"({"outcome": "y", "horizon": "month", "group_by": ["sex"],
                               "mc_draws": 100000, "seed": 5})",
                           (dir + "/submax.csv").c_str(),
                           (dir + "/submax_summary.json").c_str()) == RSD_OK);
  CHECK(slurp(dir + "/submax.csv").find("comparison,deviate,kappa,rejected,gamma") !=
        std::string::npos);
  CHECK(slurp(dir + "/submax_summary.json").find("submax/v1") != std::string::npos);
}

TEST_CASE("C API: JSON panel round trip") {
  panel_guard panel;
  REQUIRE(rsd_panel_generate(kSynthConfig, &panel.p) == RSD_OK);
  char* json_text = nullptr;
  REQUIRE(rsd_panel_to_json(panel.p, &json_text) == RSD_OK);
  panel_guard back;
  REQUIRE(rsd_panel_from_json(json_text, &back.p) == RSD_OK);
  char* json_again = nullptr;
  REQUIRE(rsd_panel_to_json(back.p, &json_again) == RSD_OK);
  CHECK(std::string(json_text) == json_again);
  rsd_string_free(json_text);
  rsd_string_free(json_again);
}

TEST_CASE("C API: error codes and messages") {
  rsd_panel* p = nullptr;
  CHECK(rsd_panel_load("/does/not/exist.csv", "", "", "", &p) == RSD_ERR_IO);
  CHECK(std::string(rsd_last_error()).find("exist.csv") != std::string::npos);

  CHECK(rsd_panel_generate("{\"bogus_key\": 1}", &p) == RSD_ERR_CONFIG);
  CHECK(std::string(rsd_last_error()).find("bogus_key") != std::string::npos);

  CHECK(rsd_panel_generate("not json", &p) == RSD_ERR_PARSE);
  CHECK(std::string(rsd_status_name(RSD_ERR_PARSE)) == "parse");
  CHECK(std::string(rsd_version()) == "0.1.0");
}

TEST_CASE("C API: discover and simulate writers") {
  std::string dir = temp_dir("discover");
  panel_guard panel;
  REQUIRE(rsd_panel_generate(kSynthConfig, &panel.p) == RSD_OK);
  design_guard design;
  REQUIRE(rsd_match_run(panel.p, kMatchSpec, &design.d) == RSD_OK);

  rsd_status st = rsd_discover_write(design.d, panel.p,
                                     R"({"outcome": "y", "horizon": "month",
                                         "covariates": ["age", "risk_score", "sex"],
                                         "discovery_fraction": 0.5, "seed": 3,
                                         "min_leaf": 10, "mc_draws": 100000})",
                                     (dir + "/disc").c_str());
  REQUIRE(st == RSD_OK);
  CHECK(slurp(dir + "/disc/tree.json").find("tree/v1") != std::string::npos);
  CHECK(fs::exists(dir + "/disc/tree.txt"));
  CHECK(fs::exists(dir + "/disc/leaves.csv"));
  CHECK(fs::exists(dir + "/disc/submax.csv"));
  CHECK(slurp(dir + "/disc/r2.csv").find("lower,upper") != std::string::npos);

  REQUIRE(rsd_simulate_write(R"({"n_treated": 150, "replications": 4, "seed": 1,
                                 "scenarios": [{"label": "demo", "tau": [0.3,0.3,0.7,0.7],
                                                "discovery_fraction": 0.5}]})",
                             (dir + "/power.csv").c_str(),
                             (dir + "/power.json").c_str()) == RSD_OK);
  CHECK(slurp(dir + "/power.csv").find("global_rate") != std::string::npos);
  CHECK(slurp(dir + "/power.json").find("power/v1") != std::string::npos);
}

#ifdef RISKDID_CLI_PATH
namespace {

int run_cli(const std::string& args) {
  std::string cmd = std::string(RISKDID_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("CLI: pipeline subcommands compose through the output directory") {
  std::string dir = temp_dir("cli");
  std::string config_path = dir + "/run.json";
  std::ofstream(config_path) << R"({
    "generate": {
      "n_units": 400, "t_max": 8, "seed": 7,
      "baseline": {"family": "normal", "mean": 0, "sd": 1},
      "noise": {"family": "normal", "mean": 0, "sd": 1},
      "hazard": {"intercept": -2.5},
      "effect": {"base": 2.0},
      "covariates": [
        {"name": "age", "kind": "continuous", "base": {"family": "normal", "mean": 40, "sd": 10}},
        {"name": "sex", "kind": "categorical", "levels": ["f", "m"], "probs": [0.5, 0.5]}
      ]
    },
    "match": {"exact": ["sex"], "calipers": {"age": 2.5}},
    "estimate": {"horizons": ["month"]},
    "sensitivity": {"horizons": ["month"], "gammas": [1, 1.5]},
    "submax": {"outcome": "y", "horizon": "month", "group_by": ["sex"], "mc_draws": 100000},
    "discover": {"outcome": "y", "horizon": "month", "covariates": ["age", "sex"],
                 "discovery_fraction": 0.5, "min_leaf": 10, "mc_draws": 100000},
    "simulate": {"n_treated": 120, "replications": 3,
                 "scenarios": [{"label": "demo", "tau": [0.3, 0.3, 0.7, 0.7]}]}
  })";

  std::string base = "--config " + config_path + " --out " + dir + "/out --seed 99";
  CHECK(run_cli(base + " generate") == 0);
  CHECK(fs::exists(dir + "/out/panel/outcomes.csv"));
  CHECK(run_cli(base + " match") == 0);
  CHECK(fs::exists(dir + "/out/design.csv"));
  CHECK(fs::exists(dir + "/out/balance.csv"));
  CHECK(run_cli(base + " estimate") == 0);
  CHECK(fs::exists(dir + "/out/results.csv"));
  CHECK(run_cli(base + " sensitivity") == 0);
  CHECK(run_cli(base + " submax") == 0);
  CHECK(fs::exists(dir + "/out/submax.csv"));
  CHECK(run_cli(base + " discover") == 0);
  CHECK(fs::exists(dir + "/out/discover/tree.json"));
  CHECK(run_cli(base + " simulate") == 0);
  CHECK(fs::exists(dir + "/out/power.csv"));

  // reruns are bit-identical under the same seed
  std::string results_a = slurp(dir + "/out/results.csv");
  std::string power_a = slurp(dir + "/out/power.csv");
  CHECK(run_cli(base + " estimate") == 0);
  CHECK(run_cli(base + " simulate") == 0);
  CHECK(slurp(dir + "/out/results.csv") == results_a);
  CHECK(slurp(dir + "/out/power.csv") == power_a);
}

TEST_CASE("CLI: unknown config keys and bad inputs exit nonzero") {
  std::string dir = temp_dir("cli_err");
  std::string config_path = dir + "/bad.json";
  std::ofstream(config_path) << R"({"generate": {"n_units": 5, "t_max": 3}, "bogus": 1})";
  CHECK(run_cli("--config " + config_path + " --out " + dir + "/out generate") != 0);

  // missing design
  std::string config2 = dir + "/ok.json";
  std::ofstream(config2) << R"({"estimate": {}})";
  CHECK(run_cli("--config " + config2 + " --out " + dir + "/none estimate") != 0);
}
#endif
