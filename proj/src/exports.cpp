#include "riskdid/exports.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "json.hpp"
#include "riskdid/csv.hpp"
#include "riskdid/errors.hpp"

namespace riskdid {

using nlohmann::json;

std::string render_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string render_gamma(const gamma_star_result& g) {
  if (!g.applicable) return "NA";
  if (g.capped) return ">10.00";
  return render_fixed(g.value, 2);
}

namespace {

std::string render_value(double v) {
  if (std::isnan(v)) return "NA";
  return format_double(v);
}

}  // namespace

csv_table results_table(const std::vector<did_result>& results) {
  csv_table t;
  t.header = {"outcome", "horizon", "estimate", "p_value", "ci_lower", "ci_upper", "gamma_star"};
  for (const auto& r : results)
    t.rows.push_back({r.outcome, horizon_name(r.h), render_value(r.estimate),
                      render_value(r.p_value), render_value(r.ci_lower),
                      render_value(r.ci_upper), render_gamma(r.gamma)});
  return t;
}

void write_results_csv(const std::string& path, const std::vector<did_result>& results) {
  write_csv(path, results_table(results));
}

void write_design(const matched_design& design, const std::string& csv_path,
                  const std::string& audit_json_path) {
  csv_table t;
  t.header = {"set_id", "role", "unit_id", "exposure_time"};
  for (const auto& s : design.sets) {
    t.rows.push_back({std::to_string(s.set_id), "treated", s.treated_unit,
                      std::to_string(s.exposure_time)});
    for (const auto& c : s.control_units)
      t.rows.push_back({std::to_string(s.set_id), "control", c,
                        std::to_string(s.exposure_time)});
  }
  write_csv(csv_path, t);

  if (audit_json_path.empty()) return;
  json j;
  j["version"] = "design/v1";
  json spec;
  spec["exact_covariates"] = design.spec.exact_covariates;
  json calipers = json::array();
  for (const auto& c : design.spec.calipers)
    calipers.push_back({{"covariate", c.covariate}, {"width", c.width}});
  spec["calipers"] = std::move(calipers);
  spec["max_controls"] = design.spec.max_controls;
  spec["min_controls"] = design.spec.min_controls;
  j["spec"] = std::move(spec);

  json per_time = json::array();
  for (const auto& row : design.audit.per_time)
    per_time.push_back({{"time", row.time},
                        {"exposed", row.exposed},
                        {"matched", row.matched},
                        {"dropped", row.dropped}});
  j["per_time"] = std::move(per_time);
  json hist;
  for (const auto& [size, count] : design.audit.set_size_histogram)
    hist[std::to_string(size)] = count;
  j["set_size_histogram"] = std::move(hist);
  json dropped = json::array();
  for (const auto& rec : design.audit.dropped)
    dropped.push_back({{"unit_id", rec.unit_id}, {"time", rec.time}, {"reason", rec.reason}});
  j["dropped"] = std::move(dropped);

  std::ofstream out(audit_json_path, std::ios::binary);
  if (!out) fail(errc::io, "cannot write " + audit_json_path);
  out << j.dump(2);
}

matched_design read_design(const std::string& csv_path, const std::string& audit_json_path) {
  matched_design design;
  csv_table t = read_csv(csv_path);
  auto col = [&](const std::string& name) {
    auto idx = t.column(name);
    if (!idx) fail(errc::parse, csv_path + ": missing column '" + name + "'");
    return *idx;
  };
  std::size_t c_set = col("set_id"), c_role = col("role"), c_unit = col("unit_id"),
              c_time = col("exposure_time");
  std::map<int, matched_set> sets;
  for (const auto& row : t.rows) {
    int set_id = static_cast<int>(parse_long(row[c_set], csv_path));
    matched_set& s = sets[set_id];
    s.set_id = set_id;
    s.exposure_time = static_cast<int>(parse_long(row[c_time], csv_path));
    if (row[c_role] == "treated") {
      if (!s.treated_unit.empty())
        fail(errc::duplicate_row, csv_path + ": two treated rows for set " + row[c_set]);
      s.treated_unit = row[c_unit];
    } else if (row[c_role] == "control") {
      s.control_units.push_back(row[c_unit]);
    } else {
      fail(errc::parse, csv_path + ": role must be treated or control");
    }
  }
  for (auto& [id, s] : sets) {
    if (s.treated_unit.empty())
      fail(errc::parse, csv_path + ": set " + std::to_string(id) + " has no treated row");
    if (s.control_units.empty())
      fail(errc::parse, csv_path + ": set " + std::to_string(id) + " has no controls");
    design.sets.push_back(std::move(s));
  }

  if (!audit_json_path.empty()) {
    std::ifstream in(audit_json_path, std::ios::binary);
    if (in) {
      json j = json::parse(in, nullptr, false);
      if (!j.is_discarded() && j.contains("spec")) {
        const auto& spec = j["spec"];
        if (spec.contains("exact_covariates"))
          design.spec.exact_covariates =
              spec["exact_covariates"].get<std::vector<std::string>>();
        if (spec.contains("calipers"))
          for (const auto& c : spec["calipers"])
            design.spec.calipers.push_back(
                {c["covariate"].get<std::string>(), c["width"].get<double>()});
        if (spec.contains("max_controls")) design.spec.max_controls = spec["max_controls"];
        if (spec.contains("min_controls")) design.spec.min_controls = spec["min_controls"];
      }
    }
  }
  return design;
}

csv_table balance_table(const balance_report& report) {
  csv_table t;
  t.header = {"covariate", "subgroup", "treated_mean", "control_mean", "pooled_sd", "asamd",
              "flag"};
  for (const auto& row : report.rows)
    t.rows.push_back({row.covariate, row.subgroup, render_value(row.treated_mean),
                      render_value(row.control_mean), render_value(row.pooled_sd),
                      render_value(row.asamd),
                      row.degenerate_scale ? "degenerate_scale" : ""});
  return t;
}

void write_balance_csv(const std::string& path, const balance_report& report) {
  write_csv(path, balance_table(report));
}

csv_table submax_table(const submax_result& result) {
  csv_table t;
  t.header = {"comparison", "deviate", "kappa", "rejected", "gamma"};
  for (const auto& pc : result.per_comparison)
    t.rows.push_back({pc.label, render_value(pc.minmax_deviate), render_value(pc.kappa),
                      pc.rejected ? "yes" : "no", render_fixed(result.gamma, 2)});
  return t;
}

void write_submax(const submax_result& result, const std::string& csv_path,
                  const std::string& summary_json_path) {
  write_csv(csv_path, submax_table(result));
  if (summary_json_path.empty()) return;
  json j;
  j["version"] = "submax/v1";
  j["global_reject"] = result.global_reject;
  j["minmax_deviate"] = result.minmax_deviate;
  j["kappa"] = result.kappa;
  j["kappa_mc_se"] = result.kappa_mc_se;
  j["alpha1"] = result.alpha1;
  j["alpha2"] = result.alpha2;
  j["gamma"] = result.gamma;
  j["tau_lower"] = result.tau_range.first;
  j["tau_upper"] = result.tau_range.second;
  j["grid_points"] = result.tau_grid.size();
  j["n_groups"] = result.n_groups;
  std::ofstream out(summary_json_path, std::ios::binary);
  if (!out) fail(errc::io, "cannot write " + summary_json_path);
  out << j.dump(2);
}

csv_table power_table(const power_report& report) {
  csv_table t;
  t.header = {"scenario", "tau00",      "tau01",  "tau10",       "tau11",
              "split",    "global_rate", "mc_se", "any_comparison_rate", "replications"};
  for (const auto& c : report.cells) {
    std::string split = render_fixed(c.discovery_fraction * 100.0, 0) + "/" +
                        render_fixed((1.0 - c.discovery_fraction) * 100.0, 0);
    t.rows.push_back({c.label, format_double(c.tau[0]), format_double(c.tau[1]),
                      format_double(c.tau[2]), format_double(c.tau[3]), split,
                      render_value(c.global_rate), render_value(c.mc_se),
                      render_value(c.any_leaf_rate), std::to_string(c.replications)});
  }
  return t;
}

void write_power(const power_report& report, const std::string& csv_path,
                 const std::string& json_path) {
  write_csv(csv_path, power_table(report));
  if (!json_path.empty()) write_text_file(json_path, power_report_to_json(report));
}

csv_table sensitivity_table(const std::vector<sensitivity_row>& rows) {
  csv_table t;
  t.header = {"outcome", "horizon", "gamma", "p_value"};
  for (const auto& r : rows)
    t.rows.push_back(
        {r.outcome, horizon_name(r.h), render_fixed(r.gamma, 2), render_value(r.p_value)});
  return t;
}

void write_sensitivity_csv(const std::string& path, const std::vector<sensitivity_row>& rows) {
  write_csv(path, sensitivity_table(rows));
}

csv_table r2_table(const std::vector<std::tuple<std::string, horizon, r2_bounds>>& rows) {
  csv_table t;
  t.header = {"outcome", "horizon", "lower", "upper", "flag"};
  for (const auto& [outcome, h, bounds] : rows)
    t.rows.push_back({outcome, horizon_name(h), render_fixed(bounds.lower, 3),
                      render_fixed(bounds.upper, 3),
                      bounds.ridge_fallback ? "ridge_fallback" : ""});
  return t;
}

void write_r2_csv(const std::string& path,
                  const std::vector<std::tuple<std::string, horizon, r2_bounds>>& rows) {
  write_csv(path, r2_table(rows));
}

void write_leaf_csv(const std::string& path, const discovery_result& result) {
  csv_table t;
  t.header = {"leaf", "n_testing_sets", "estimate", "ci_lower", "ci_upper", "gamma_star",
              "rejected", "dropped"};
  for (const auto& leaf : result.leaves) {
    if (leaf.dropped) {
      t.rows.push_back({leaf.label, "0", "NA", "NA", "NA", "NA", "no", "yes"});
    } else {
      t.rows.push_back({leaf.label, std::to_string(leaf.n_sets), render_value(leaf.estimate),
                        render_value(leaf.ci_lower), render_value(leaf.ci_upper),
                        render_gamma(leaf.gamma), leaf.rejected ? "yes" : "no", "no"});
    }
  }
  write_csv(path, t);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io, "cannot write " + path);
  out << text;
}

}  // namespace riskdid
