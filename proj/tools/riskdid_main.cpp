// riskdid command line: batch front end over the shared-library C API.
// Subcommands compose through files so pipeline stages can run in CI:
//   generate -> match -> balance/estimate/sensitivity/submax/discover
//   simulate (self-contained power study)

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "riskdid.h"

using nlohmann::json;

namespace {

struct cli_error {
  rsd_status status;
  std::string message;
};

void check(rsd_status status) {
  if (status != RSD_OK)
    throw cli_error{status, std::string(rsd_status_name(status)) + ": " + rsd_last_error()};
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw cli_error{RSD_ERR_IO, "cannot open config " + path};
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw cli_error{RSD_ERR_PARSE, "config " + path + ": invalid JSON"};
  return j;
}

// known top-level config keys; anything else is rejected before work starts
void validate_config(const json& config) {
  static const std::vector<std::string> allowed = {
      "seed",  "out",      "threads",  "input",  "generate", "match",
      "estimate", "sensitivity", "submax", "discover", "simulate"};
  for (auto it = config.begin(); it != config.end(); ++it) {
    bool ok = false;
    for (const auto& key : allowed) ok = ok || key == it.key();
    if (!ok) throw cli_error{RSD_ERR_CONFIG, "config: unknown key '" + it.key() + "'"};
  }
}

json section(const json& config, const std::string& name) {
  if (config.contains(name)) return config[name];
  return json::object();
}

struct panel_handle {
  rsd_panel* p = nullptr;
  ~panel_handle() { rsd_panel_free(p); }
};

struct design_handle {
  rsd_design* d = nullptr;
  ~design_handle() { rsd_design_free(d); }
};

struct common_flags {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

std::string out_path(const common_flags& flags, const std::string& file) {
  std::filesystem::create_directories(flags.out_dir);
  return flags.out_dir + "/" + file;
}

// panel inputs: either an input section naming the three CSVs, or files
// previously produced by `generate` in the output directory
void load_panel_for(const common_flags& flags, const json& config, panel_handle& panel) {
  json input = section(config, "input");
  std::string outcomes, covariates, exposures, schema;
  if (input.contains("outcomes")) outcomes = input["outcomes"].get<std::string>();
  if (input.contains("covariates")) covariates = input["covariates"].get<std::string>();
  if (input.contains("exposures")) exposures = input["exposures"].get<std::string>();
  if (input.contains("schema")) {
    std::ifstream in(input["schema"].get<std::string>(), std::ios::binary);
    if (!in)
      throw cli_error{RSD_ERR_IO, "cannot open schema " + input["schema"].get<std::string>()};
    schema.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  if (outcomes.empty()) {
    std::string dir = flags.out_dir + "/panel";
    outcomes = dir + "/outcomes.csv";
    covariates = dir + "/covariates.csv";
    exposures = dir + "/exposures.csv";
    std::ifstream in(dir + "/schema.json", std::ios::binary);
    if (in) schema.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  check(rsd_panel_load(outcomes.c_str(), covariates.c_str(), exposures.c_str(), schema.c_str(),
                       &panel.p));
}

void load_design_for(const common_flags& flags, design_handle& design) {
  std::string csv = out_path(const_cast<common_flags&>(flags), "design.csv");
  std::string audit = flags.out_dir + "/design_audit.json";
  check(rsd_design_read(csv.c_str(), audit.c_str(), &design.d));
}

int cmd_generate(const common_flags& flags, const json& config) {
  json synth = section(config, "generate");
  if (flags.seed) synth["seed"] = *flags.seed;
  panel_handle panel;
  check(rsd_panel_generate(synth.dump().c_str(), &panel.p));
  std::string dir = flags.out_dir + "/panel";
  check(rsd_panel_write(panel.p, dir.c_str()));
  char* report = nullptr;
  check(rsd_panel_validate(panel.p, &report));
  std::ofstream(out_path(flags, "panel_validation.json"), std::ios::binary) << report;
  rsd_string_free(report);
  std::cout << "panel written to " << dir << "\n";
  return 0;
}

int cmd_match(const common_flags& flags, const json& config) {
  panel_handle panel;
  load_panel_for(flags, config, panel);
  design_handle design;
  check(rsd_match_run(panel.p, section(config, "match").dump().c_str(), &design.d));
  std::string csv = out_path(flags, "design.csv");
  std::string audit = out_path(flags, "design_audit.json");
  check(rsd_design_write(design.d, csv.c_str(), audit.c_str()));
  check(rsd_balance_write(design.d, panel.p, out_path(flags, "balance.csv").c_str()));
  std::cout << "design written to " << csv << "\n";
  return 0;
}

int cmd_balance(const common_flags& flags, const json& config) {
  panel_handle panel;
  load_panel_for(flags, config, panel);
  design_handle design;
  load_design_for(flags, design);
  check(rsd_balance_write(design.d, panel.p, out_path(flags, "balance.csv").c_str()));
  std::cout << "balance written to " << flags.out_dir << "/balance.csv\n";
  return 0;
}

int cmd_estimate(const common_flags& flags, const json& config, const json& overrides) {
  panel_handle panel;
  load_panel_for(flags, config, panel);
  design_handle design;
  load_design_for(flags, design);
  json opts = section(config, "estimate");
  for (auto it = overrides.begin(); it != overrides.end(); ++it) opts[it.key()] = it.value();
  check(rsd_estimate_write(design.d, panel.p, opts.dump().c_str(),
                           out_path(flags, "results.csv").c_str()));
  std::cout << "results written to " << flags.out_dir << "/results.csv\n";
  return 0;
}

int cmd_sensitivity(const common_flags& flags, const json& config, const json& overrides) {
  panel_handle panel;
  load_panel_for(flags, config, panel);
  design_handle design;
  load_design_for(flags, design);
  json opts = section(config, "sensitivity");
  for (auto it = overrides.begin(); it != overrides.end(); ++it) opts[it.key()] = it.value();
  check(rsd_sensitivity_write(design.d, panel.p, opts.dump().c_str(),
                              out_path(flags, "sensitivity.csv").c_str()));
  std::cout << "sensitivity table written to " << flags.out_dir << "/sensitivity.csv\n";
  return 0;
}

int cmd_submax(const common_flags& flags, const json& config, const json& overrides) {
  panel_handle panel;
  load_panel_for(flags, config, panel);
  design_handle design;
  load_design_for(flags, design);
  json opts = section(config, "submax");
  for (auto it = overrides.begin(); it != overrides.end(); ++it) opts[it.key()] = it.value();
  if (flags.seed) opts["seed"] = *flags.seed;
  check(rsd_submax_write(design.d, panel.p, opts.dump().c_str(),
                         out_path(flags, "submax.csv").c_str(),
                         out_path(flags, "submax_summary.json").c_str()));
  std::cout << "submax table written to " << flags.out_dir << "/submax.csv\n";
  return 0;
}

int cmd_discover(const common_flags& flags, const json& config, const json& overrides) {
  panel_handle panel;
  load_panel_for(flags, config, panel);
  design_handle design;
  load_design_for(flags, design);
  json opts = section(config, "discover");
  for (auto it = overrides.begin(); it != overrides.end(); ++it) opts[it.key()] = it.value();
  if (flags.seed) opts["seed"] = *flags.seed;
  std::string dir = flags.out_dir + "/discover";
  check(rsd_discover_write(design.d, panel.p, opts.dump().c_str(), dir.c_str()));
  std::cout << "discovery outputs written to " << dir << "\n";
  return 0;
}

int cmd_simulate(const common_flags& flags, const json& config, const json& overrides) {
  json opts = section(config, "simulate");
  for (auto it = overrides.begin(); it != overrides.end(); ++it) opts[it.key()] = it.value();
  if (flags.seed) opts["seed"] = *flags.seed;
  if (flags.threads) opts["threads"] = *flags.threads;
  check(rsd_simulate_write(opts.dump().c_str(), out_path(flags, "power.csv").c_str(),
                           out_path(flags, "power.json").c_str()));
  std::cout << "power report written to " << flags.out_dir << "/power.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"risk-set matched difference-in-differences"};
  app.require_subcommand(1);

  common_flags flags;
  app.add_option("--config", flags.config_path, "JSON run configuration");
  app.add_option("--out", flags.out_dir, "output directory");
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "master seed override");
  unsigned threads_value = 0;
  auto* threads_opt = app.add_option("--threads", threads_value, "worker thread cap");

  auto* generate = app.add_subcommand("generate", "synthesize a panel");
  auto* match = app.add_subcommand("match", "run risk-set profile matching");
  auto* balance = app.add_subcommand("balance", "balance table for an existing design");
  auto* estimate = app.add_subcommand("estimate", "DiD estimates, CIs, gamma");
  auto* sensitivity = app.add_subcommand("sensitivity", "worst-case p over a gamma grid");
  auto* submax = app.add_subcommand("submax", "effect modification by pre-specified groups");
  auto* discover = app.add_subcommand("discover", "de novo subgroup discovery");
  auto* simulate = app.add_subcommand("simulate", "simulated power study");

  // per-command overrides of config keys
  std::string outcome, horizon, side;
  double alpha = -1.0, alpha1 = -1.0, gamma = -1.0;
  for (CLI::App* sub : {estimate, sensitivity, submax, discover}) {
    sub->add_option("--outcome", outcome, "outcome name");
    sub->add_option("--horizon", horizon, "month|year");
    sub->add_option("--alpha", alpha, "test level");
  }
  for (CLI::App* sub : {submax, discover}) {
    sub->add_option("--alpha1", alpha1, "CI share of alpha");
    sub->add_option("--gamma", gamma, "sensitivity parameter");
  }
  estimate->add_option("--side", side, "upper|lower|two_sided");
  simulate->add_option("--alpha", alpha, "test level");
  simulate->add_option("--alpha1", alpha1, "CI share of alpha");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) flags.seed = seed_value;
  if (*threads_opt) flags.threads = threads_value;

  try {
    json config = load_config(flags.config_path);
    validate_config(config);

    json overrides = json::object();
    if (!outcome.empty()) {
      overrides["outcome"] = outcome;              // submax/discover take one outcome
      overrides["outcomes"] = json::array({outcome});  // estimate/sensitivity take a list
    }
    if (!horizon.empty()) {
      overrides["horizon"] = horizon;
      overrides["horizons"] = json::array({horizon});
    }
    if (!side.empty()) overrides["side"] = side;
    if (alpha >= 0.0) overrides["alpha"] = alpha;
    if (alpha1 >= 0.0) overrides["alpha1"] = alpha1;
    if (gamma >= 0.0) overrides["gamma"] = gamma;

    if (*generate) return cmd_generate(flags, config);
    if (*match) return cmd_match(flags, config);
    if (*balance) return cmd_balance(flags, config);
    if (*estimate) {
      json opts = overrides;
      opts.erase("outcome");
      opts.erase("horizon");
      return cmd_estimate(flags, config, opts);
    }
    if (*sensitivity) {
      json opts = overrides;
      opts.erase("outcome");
      opts.erase("horizon");
      opts.erase("alpha");
      return cmd_sensitivity(flags, config, opts);
    }
    if (*submax) {
      json opts = overrides;
      opts.erase("outcomes");
      opts.erase("horizons");
      return cmd_submax(flags, config, opts);
    }
    if (*discover) {
      json opts = overrides;
      opts.erase("outcomes");
      opts.erase("horizons");
      return cmd_discover(flags, config, opts);
    }
    if (*simulate) {
      json opts = overrides;
      opts.erase("outcome");
      opts.erase("outcomes");
      opts.erase("horizon");
      opts.erase("horizons");
      return cmd_simulate(flags, config, opts);
    }
  } catch (const cli_error& e) {
    std::cerr << "error: " << e.message << "\n";
    return static_cast<int>(e.status);
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return static_cast<int>(RSD_ERR_INTERNAL);
  }
  return 0;
}
