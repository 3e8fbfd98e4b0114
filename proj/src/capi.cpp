#include "riskdid.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskdid/discovery.hpp"
#include "riskdid/errors.hpp"
#include "riskdid/exports.hpp"
#include "riskdid/inference.hpp"
#include "riskdid/matching.hpp"
#include "riskdid/panel.hpp"
#include "riskdid/rand.hpp"
#include "riskdid/simulation.hpp"
#include "riskdid/submax.hpp"
#include "riskdid/synth.hpp"

#if defined(__GNUC__)
#define RSD_EXPORT __attribute__((visibility("default")))
#else
#define RSD_EXPORT
#endif

using nlohmann::json;

struct rsd_panel {
  riskdid::panel_dataset d;
};

struct rsd_design {
  riskdid::matched_design m;
};

namespace {

thread_local std::string g_last_error;

rsd_status status_of(riskdid::errc code) {
  using riskdid::errc;
  switch (code) {
    case errc::io: return RSD_ERR_IO;
    case errc::parse: return RSD_ERR_PARSE;
    case errc::config: return RSD_ERR_CONFIG;
    case errc::missing_data: return RSD_ERR_MISSING_DATA;
    case errc::duplicate_row: return RSD_ERR_DUPLICATE_ROW;
    case errc::bad_exposure: return RSD_ERR_BAD_EXPOSURE;
    case errc::domain: return RSD_ERR_DOMAIN;
    case errc::name: return RSD_ERR_NAME;
    case errc::empty_design: return RSD_ERR_EMPTY_DESIGN;
    case errc::degenerate: return RSD_ERR_DEGENERATE;
    case errc::group_overlap: return RSD_ERR_CONFIG;
    case errc::split: return RSD_ERR_SPLIT;
    case errc::truncated_horizon: return RSD_ERR_DOMAIN;
    case errc::unsupported: return RSD_ERR_UNSUPPORTED;
    case errc::internal: return RSD_ERR_INTERNAL;
  }
  return RSD_ERR_INTERNAL;
}

template <typename Fn>
rsd_status wrap(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return RSD_OK;
  } catch (const riskdid::error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RSD_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return RSD_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_opts(const char* opts_json, const std::vector<std::string>& allowed,
                const std::string& where) {
  json j = json::object();
  if (opts_json && *opts_json) {
    j = json::parse(opts_json, nullptr, false);
    if (j.is_discarded()) riskdid::fail(riskdid::errc::parse, where + ": invalid JSON");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& key : allowed) ok = ok || key == it.key();
    if (!ok) riskdid::fail(riskdid::errc::config, where + ": unknown key '" + it.key() + "'");
  }
  return j;
}

riskdid::match_spec parse_match_spec(const char* spec_json) {
  json j = parse_opts(spec_json, {"exact", "calipers", "max_controls", "min_controls"},
                      "match spec");
  riskdid::match_spec spec;
  if (j.contains("exact")) spec.exact_covariates = j["exact"].get<std::vector<std::string>>();
  if (j.contains("calipers"))
    for (auto it = j["calipers"].begin(); it != j["calipers"].end(); ++it)
      spec.calipers.push_back({it.key(), it.value().get<double>()});
  if (j.contains("max_controls")) spec.max_controls = j["max_controls"].get<int>();
  if (j.contains("min_controls")) spec.min_controls = j["min_controls"].get<int>();
  spec.validate();
  return spec;
}

std::vector<std::string> outcomes_or_all(const json& j, const riskdid::panel_dataset& d) {
  if (j.contains("outcomes")) return j["outcomes"].get<std::vector<std::string>>();
  return d.outcome_names;
}

std::vector<riskdid::horizon> horizons_of(const json& j) {
  std::vector<riskdid::horizon> out;
  if (j.contains("horizons")) {
    for (const auto& h : j["horizons"]) out.push_back(riskdid::parse_horizon(h));
  } else {
    out = {riskdid::horizon::month, riskdid::horizon::year};
  }
  return out;
}

// joint cells of the named categorical covariates at each set's match time
struct submax_grouping {
  std::map<int, int> groups_by_set_id;
  riskdid::comparison_matrix cmat;
  std::size_t n_groups = 0;
};

submax_grouping build_grouping(const riskdid::matched_design& design,
                               const riskdid::panel_dataset& d,
                               const std::vector<std::string>& group_by) {
  if (group_by.empty()) riskdid::fail(riskdid::errc::config, "submax: group_by is empty");
  submax_grouping out;
  std::map<std::vector<std::string>, int> cell_index;
  std::vector<std::vector<std::string>> cells;
  for (const auto& s : design.sets) {
    const auto& treated = d.units[d.index_of(s.treated_unit)];
    std::vector<std::string> cell;
    bool complete = true;
    for (const auto& name : group_by) {
      auto it = treated.categorical.find(name);
      if (it == treated.categorical.end() || it->second.at(s.match_time()).empty()) {
        complete = false;
        break;
      }
      cell.push_back(it->second.at(s.match_time()));
    }
    if (!complete) continue;  // set excluded from the grouping
    auto [pos, inserted] = cell_index.try_emplace(cell, static_cast<int>(cells.size()));
    if (inserted) cells.push_back(cell);
    out.groups_by_set_id[s.set_id] = pos->second;
  }
  out.n_groups = cells.size();
  if (out.n_groups == 0)
    riskdid::fail(riskdid::errc::empty_design, "submax: no sets carry the grouping covariates");

  out.cmat.n_groups = out.n_groups;
  // one row per covariate level
  for (std::size_t ci = 0; ci < group_by.size(); ++ci) {
    std::set<std::string> levels;
    for (const auto& cell : cells) levels.insert(cell[ci]);
    for (const auto& level : levels) {
      std::vector<std::size_t> members;
      for (std::size_t g = 0; g < cells.size(); ++g)
        if (cells[g][ci] == level) members.push_back(g);
      out.cmat.members.push_back(std::move(members));
      out.cmat.labels.push_back(group_by[ci] + "=" + level);
    }
  }
  // one row per joint cell when several covariates interact
  if (group_by.size() > 1) {
    for (std::size_t g = 0; g < cells.size(); ++g) {
      std::string label;
      for (std::size_t ci = 0; ci < group_by.size(); ++ci) {
        if (ci) label += " & ";
        label += group_by[ci] + "=" + cells[g][ci];
      }
      out.cmat.members.push_back({g});
      out.cmat.labels.push_back(label);
    }
  }
  // global row
  std::vector<std::size_t> all(cells.size());
  for (std::size_t g = 0; g < all.size(); ++g) all[g] = g;
  out.cmat.members.push_back(std::move(all));
  out.cmat.labels.push_back("(all)");
  return out;
}

riskdid::submax_options submax_options_of(const json& j) {
  riskdid::submax_options options;
  if (j.contains("alpha")) options.alpha = j["alpha"].get<double>();
  options.alpha1 = j.contains("alpha1") ? j["alpha1"].get<double>() : options.alpha / 2.0;
  if (j.contains("gamma")) options.gamma = j["gamma"].get<double>();
  if (j.contains("grid_points")) options.grid_points = j["grid_points"].get<int>();
  if (j.contains("mc_draws")) options.mc_draws = j["mc_draws"].get<long>();
  if (j.contains("seed")) options.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("side")) options.two_sided = j["side"].get<std::string>() != "upper";
  return options;
}

}  // namespace

extern "C" {

RSD_EXPORT const char* rsd_version(void) { return "0.1.0"; }

RSD_EXPORT const char* rsd_status_name(rsd_status status) {
  switch (status) {
    case RSD_OK: return "ok";
    case RSD_ERR_IO: return "io";
    case RSD_ERR_PARSE: return "parse";
    case RSD_ERR_CONFIG: return "config";
    case RSD_ERR_MISSING_DATA: return "missing_data";
    case RSD_ERR_DUPLICATE_ROW: return "duplicate_row";
    case RSD_ERR_BAD_EXPOSURE: return "bad_exposure";
    case RSD_ERR_DOMAIN: return "domain";
    case RSD_ERR_NAME: return "name";
    case RSD_ERR_EMPTY_DESIGN: return "empty_design";
    case RSD_ERR_DEGENERATE: return "degenerate";
    case RSD_ERR_SPLIT: return "split";
    case RSD_ERR_UNSUPPORTED: return "unsupported";
    case RSD_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

RSD_EXPORT const char* rsd_last_error(void) { return g_last_error.c_str(); }

RSD_EXPORT void rsd_string_free(char* s) { std::free(s); }

RSD_EXPORT rsd_status rsd_panel_load(const char* outcomes_csv, const char* covariates_csv,
                                     const char* exposures_csv, const char* schema_json,
                                     rsd_panel** out) {
  return wrap([&]() {
    if (!outcomes_csv || !out) riskdid::fail(riskdid::errc::config, "null argument");
    riskdid::panel_schema schema =
        riskdid::parse_panel_schema(schema_json ? schema_json : "");
    auto panel = std::make_unique<rsd_panel>();
    panel->d = riskdid::load_panel(outcomes_csv, covariates_csv ? covariates_csv : "",
                                   exposures_csv ? exposures_csv : "", schema);
    *out = panel.release();
  });
}

RSD_EXPORT rsd_status rsd_panel_generate(const char* synth_config_json, rsd_panel** out) {
  return wrap([&]() {
    if (!synth_config_json || !out) riskdid::fail(riskdid::errc::config, "null argument");
    riskdid::synth_config cfg = riskdid::parse_synth_config(synth_config_json);
    auto panel = std::make_unique<rsd_panel>();
    panel->d = riskdid::synth_generate(cfg);
    *out = panel.release();
  });
}

RSD_EXPORT rsd_status rsd_panel_write(const rsd_panel* panel, const char* dir) {
  return wrap([&]() {
    if (!panel || !dir) riskdid::fail(riskdid::errc::config, "null argument");
    riskdid::write_panel(panel->d, dir);
  });
}

RSD_EXPORT rsd_status rsd_panel_from_json(const char* json_text, rsd_panel** out) {
  return wrap([&]() {
    if (!json_text || !out) riskdid::fail(riskdid::errc::config, "null argument");
    auto panel = std::make_unique<rsd_panel>();
    panel->d = riskdid::panel_from_json(json_text);
    *out = panel.release();
  });
}

RSD_EXPORT rsd_status rsd_panel_to_json(const rsd_panel* panel, char** json_out) {
  return wrap([&]() {
    if (!panel || !json_out) riskdid::fail(riskdid::errc::config, "null argument");
    *json_out = dup_string(riskdid::panel_to_json(panel->d));
  });
}

RSD_EXPORT rsd_status rsd_panel_validate(const rsd_panel* panel, char** report_json_out) {
  return wrap([&]() {
    if (!panel || !report_json_out) riskdid::fail(riskdid::errc::config, "null argument");
    riskdid::validation_report report = riskdid::validate_panel(panel->d);
    json j;
    j["ok"] = report.ok();
    json issues = json::array();
    for (const auto& issue : report.issues)
      issues.push_back({{"kind", issue.kind}, {"detail", issue.detail}});
    j["issues"] = std::move(issues);
    *report_json_out = dup_string(j.dump(2));
  });
}

RSD_EXPORT void rsd_panel_free(rsd_panel* panel) { delete panel; }

RSD_EXPORT rsd_status rsd_match_run(const rsd_panel* panel, const char* match_spec_json,
                                    rsd_design** out) {
  return wrap([&]() {
    if (!panel || !out) riskdid::fail(riskdid::errc::config, "null argument");
    riskdid::match_spec spec = parse_match_spec(match_spec_json);
    auto design = std::make_unique<rsd_design>();
    design->m = riskdid::run_risk_set_matching(panel->d, spec);
    *out = design.release();
  });
}

RSD_EXPORT rsd_status rsd_design_write(const rsd_design* design, const char* csv_path,
                                       const char* audit_json_path) {
  return wrap([&]() {
    if (!design || !csv_path) riskdid::fail(riskdid::errc::config, "null argument");
    riskdid::write_design(design->m, csv_path, audit_json_path ? audit_json_path : "");
  });
}

RSD_EXPORT rsd_status rsd_design_read(const char* csv_path, const char* audit_json_path,
                                      rsd_design** out) {
  return wrap([&]() {
    if (!csv_path || !out) riskdid::fail(riskdid::errc::config, "null argument");
    auto design = std::make_unique<rsd_design>();
    design->m = riskdid::read_design(csv_path, audit_json_path ? audit_json_path : "");
    *out = design.release();
  });
}

RSD_EXPORT rsd_status rsd_balance_write(const rsd_design* design, const rsd_panel* panel,
                                        const char* csv_path) {
  return wrap([&]() {
    if (!design || !panel || !csv_path) riskdid::fail(riskdid::errc::config, "null argument");
    riskdid::balance_report report = riskdid::compute_asamd(
        design->m, panel->d, [](const riskdid::matched_set&) { return true; }, "all");
    riskdid::write_balance_csv(csv_path, report);
  });
}

RSD_EXPORT void rsd_design_free(rsd_design* design) { delete design; }

RSD_EXPORT rsd_status rsd_estimate_write(const rsd_design* design, const rsd_panel* panel,
                                         const char* opts_json, const char* csv_path) {
  return wrap([&]() {
    if (!design || !panel || !csv_path) riskdid::fail(riskdid::errc::config, "null argument");
    json j = parse_opts(opts_json, {"outcomes", "horizons", "alpha", "side"}, "estimate");
    double alpha = j.contains("alpha") ? j["alpha"].get<double>() : 0.05;
    riskdid::tail side = j.contains("side") ? riskdid::parse_tail(j["side"])
                                            : riskdid::tail::two_sided;
    std::vector<riskdid::did_result> results;
    for (const auto& outcome : outcomes_or_all(j, panel->d))
      for (riskdid::horizon h : horizons_of(j))
        results.push_back(
            riskdid::estimate_outcome(design->m, panel->d, outcome, h, alpha, side));
    riskdid::write_results_csv(csv_path, results);
  });
}

RSD_EXPORT rsd_status rsd_sensitivity_write(const rsd_design* design, const rsd_panel* panel,
                                            const char* opts_json, const char* csv_path) {
  return wrap([&]() {
    if (!design || !panel || !csv_path) riskdid::fail(riskdid::errc::config, "null argument");
    json j = parse_opts(opts_json, {"outcomes", "horizons", "gammas", "side"}, "sensitivity");
    std::vector<double> gammas = {1.0, 1.5, 2.0, 4.0, 10.0};
    if (j.contains("gammas")) gammas = j["gammas"].get<std::vector<double>>();
    riskdid::tail side = j.contains("side") ? riskdid::parse_tail(j["side"])
                                            : riskdid::tail::two_sided;
    std::vector<riskdid::sensitivity_row> rows;
    for (const auto& outcome : outcomes_or_all(j, panel->d)) {
      for (riskdid::horizon h : horizons_of(j)) {
        riskdid::contrast_study study = riskdid::build_study(design->m, panel->d, outcome, h);
        if (study.sets.empty()) continue;
        for (double g : gammas) {
          riskdid::sensitivity_row row;
          row.outcome = outcome;
          row.h = h;
          row.gamma = g;
          row.p_value = riskdid::permutation_test(study.sets, 0.0, g, side).p;
          rows.push_back(row);
        }
      }
    }
    riskdid::write_sensitivity_csv(csv_path, rows);
  });
}

RSD_EXPORT rsd_status rsd_submax_write(const rsd_design* design, const rsd_panel* panel,
                                       const char* opts_json, const char* csv_path,
                                       const char* summary_json_path) {
  return wrap([&]() {
    if (!design || !panel || !csv_path) riskdid::fail(riskdid::errc::config, "null argument");
    json j = parse_opts(opts_json,
                        {"outcome", "horizon", "group_by", "alpha", "alpha1", "gamma",
                         "grid_points", "mc_draws", "seed", "side"},
                        "submax");
    if (!j.contains("outcome")) riskdid::fail(riskdid::errc::config, "submax: outcome required");
    if (!j.contains("group_by")) riskdid::fail(riskdid::errc::config, "submax: group_by required");
    std::string outcome = j["outcome"];
    riskdid::horizon h = j.contains("horizon") ? riskdid::parse_horizon(j["horizon"])
                                               : riskdid::horizon::month;
    submax_grouping grouping =
        build_grouping(design->m, panel->d, j["group_by"].get<std::vector<std::string>>());
    riskdid::submax_options options = submax_options_of(j);
    riskdid::submax_result result = riskdid::minmax_test(
        design->m, panel->d, outcome, h, grouping.groups_by_set_id, grouping.cmat, options);
    riskdid::write_submax(result, csv_path, summary_json_path ? summary_json_path : "");
  });
}

RSD_EXPORT rsd_status rsd_discover_write(const rsd_design* design, const rsd_panel* panel,
                                         const char* opts_json, const char* out_dir) {
  return wrap([&]() {
    if (!design || !panel || !out_dir) riskdid::fail(riskdid::errc::config, "null argument");
    json j = parse_opts(opts_json,
                        {"outcome", "horizon", "covariates", "discovery_fraction", "seed",
                         "alpha", "alpha1", "gamma", "min_leaf", "max_depth", "complexity",
                         "gain_scale", "mc_draws", "grid_points", "side"},
                        "discover");
    if (!j.contains("outcome"))
      riskdid::fail(riskdid::errc::config, "discover: outcome required");
    std::string outcome = j["outcome"];
    riskdid::horizon h = j.contains("horizon") ? riskdid::parse_horizon(j["horizon"])
                                               : riskdid::horizon::month;
    std::vector<std::string> covariates;
    if (j.contains("covariates")) covariates = j["covariates"].get<std::vector<std::string>>();
    else {
      covariates = panel->d.continuous_names;
      for (const auto& name : panel->d.categorical_names) covariates.push_back(name);
    }

    riskdid::split_plan plan;
    if (j.contains("discovery_fraction"))
      plan.discovery_fraction = j["discovery_fraction"].get<double>();
    if (j.contains("seed")) plan.seed = j["seed"].get<std::uint64_t>();

    riskdid::cart_params cart;
    if (j.contains("min_leaf")) cart.min_leaf = j["min_leaf"].get<int>();
    if (j.contains("max_depth")) cart.max_depth = j["max_depth"].get<int>();
    if (j.contains("complexity")) cart.complexity = j["complexity"].get<double>();
    if (j.contains("gain_scale")) cart.gain_sigma2_scale = j["gain_scale"].get<double>();

    riskdid::submax_options options = submax_options_of(j);
    options.seed = riskdid::derive_seed(plan.seed, 17);

    riskdid::discovery_result result = riskdid::discover_and_confirm(
        design->m, panel->d, outcome, h, plan, covariates, cart, options);

    std::filesystem::create_directories(out_dir);
    std::string dir = std::string(out_dir);
    riskdid::write_text_file(dir + "/tree.json", riskdid::tree_to_json(result));
    std::string text;
    for (std::size_t si = 0; si < result.model.strata.size(); ++si) {
      if (result.model.strata.size() > 1)
        text += "stratum " + std::to_string(si + 1) + ":\n";
      text += result.model.strata[si].tree.describe();
    }
    riskdid::write_text_file(dir + "/tree.txt", text);
    riskdid::write_leaf_csv(dir + "/leaves.csv", result);
    riskdid::write_submax(result.confirmation, dir + "/submax.csv",
                          dir + "/submax_summary.json");

    riskdid::r2_bounds bounds =
        riskdid::effect_variation_bounds(design->m, panel->d, outcome, h, covariates);
    riskdid::write_r2_csv(dir + "/r2.csv", {{outcome, h, bounds}});
  });
}

RSD_EXPORT rsd_status rsd_simulate_write(const char* opts_json, const char* csv_path,
                                         const char* json_path) {
  return wrap([&]() {
    if (!csv_path) riskdid::fail(riskdid::errc::config, "null argument");
    json j = parse_opts(opts_json,
                        {"n_treated", "replications", "seed", "scenarios", "alpha", "alpha1",
                         "mc_draws", "grid_points", "threads", "min_leaf", "max_depth",
                         "complexity", "gain_scale", "set_size_probs"},
                        "simulate");
    int n_treated = j.contains("n_treated") ? j["n_treated"].get<int>() : 2000;
    int replications = j.contains("replications") ? j["replications"].get<int>() : 1000;
    std::uint64_t seed = j.contains("seed") ? j["seed"].get<std::uint64_t>() : 1;

    std::vector<riskdid::sim_scenario> scenarios;
    if (!j.contains("scenarios") || (j["scenarios"].is_string() && j["scenarios"] == "benchmark")) {
      scenarios = riskdid::benchmark_power_grid(n_treated, replications, seed);
    } else {
      std::uint64_t stream = 0;
      for (const auto& js : j["scenarios"]) {
        riskdid::sim_scenario scn;
        scn.label = js.contains("label") ? js["label"].get<std::string>()
                                         : "scenario" + std::to_string(stream + 1);
        if (js.contains("tau")) {
          auto tau = js["tau"].get<std::vector<double>>();
          if (tau.size() != 4)
            riskdid::fail(riskdid::errc::config, "simulate: tau needs four entries");
          for (std::size_t i = 0; i < 4; ++i) scn.tau[i] = tau[i];
        }
        if (js.contains("discovery_fraction"))
          scn.discovery_fraction = js["discovery_fraction"].get<double>();
        scn.n_treated = n_treated;
        scn.replications = replications;
        scn.seed = riskdid::derive_seed(seed, 31000 + stream++);
        scenarios.push_back(std::move(scn));
      }
    }
    for (auto& scn : scenarios) {
      if (j.contains("alpha")) scn.alpha = j["alpha"].get<double>();
      if (j.contains("alpha1")) scn.alpha1 = j["alpha1"].get<double>();
      if (j.contains("set_size_probs"))
        scn.set_size_probs = j["set_size_probs"].get<std::vector<double>>();
    }

    riskdid::power_study_params params;
    if (j.contains("mc_draws")) params.mc_draws = j["mc_draws"].get<long>();
    if (j.contains("grid_points")) params.grid_points = j["grid_points"].get<int>();
    if (j.contains("threads")) params.threads = j["threads"].get<unsigned>();
    if (j.contains("min_leaf")) params.cart.min_leaf = j["min_leaf"].get<int>();
    if (j.contains("max_depth")) params.cart.max_depth = j["max_depth"].get<int>();
    if (j.contains("complexity")) params.cart.complexity = j["complexity"].get<double>();
    if (j.contains("gain_scale")) params.cart.gain_sigma2_scale = j["gain_scale"].get<double>();

    riskdid::power_report report = riskdid::run_power_study(scenarios, params);
    riskdid::write_power(report, csv_path, json_path ? json_path : "");
  });
}

}  // extern "C"
