#include "riskdid/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "json.hpp"
#include "riskdid/csv.hpp"
#include "riskdid/errors.hpp"

namespace riskdid {

using nlohmann::json;

double unit_record::outcome_at(const std::string& name, int t) const {
  auto it = outcomes.find(name);
  if (it == outcomes.end()) fail(errc::name, "unknown outcome '" + name + "'");
  return it->second[static_cast<std::size_t>(t - 1)];
}

double unit_record::continuous_at(const std::string& name, int t) const {
  auto it = continuous.find(name);
  if (it == continuous.end()) fail(errc::name, "unknown continuous covariate '" + name + "'");
  return it->second[static_cast<std::size_t>(t - 1)];
}

const std::string& unit_record::categorical_at(const std::string& name, int t) const {
  auto it = categorical.find(name);
  if (it == categorical.end()) fail(errc::name, "unknown categorical covariate '" + name + "'");
  return it->second.at(t);
}

std::size_t panel_dataset::index_of(const std::string& id) const {
  auto it = unit_index.find(id);
  if (it == unit_index.end()) fail(errc::name, "unknown unit '" + id + "'");
  return it->second;
}

void panel_dataset::rebuild_index() {
  unit_index.clear();
  for (std::size_t i = 0; i < units.size(); ++i) unit_index[units[i].id] = i;
}

namespace {

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      fail(errc::config, "unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace

panel_schema parse_panel_schema(const std::string& schema_json) {
  panel_schema s;
  if (schema_json.empty()) return s;
  json j = json::parse(schema_json, nullptr, false);
  if (j.is_discarded()) fail(errc::parse, "schema: invalid JSON");
  reject_unknown_keys(j, {"outcomes", "covariates", "exposures"}, "schema");
  if (j.contains("outcomes")) {
    const auto& o = j["outcomes"];
    reject_unknown_keys(o, {"unit", "time", "name", "value"}, "schema.outcomes");
    if (o.contains("unit")) s.outcome_unit = o["unit"].get<std::string>();
    if (o.contains("time")) s.outcome_time = o["time"].get<std::string>();
    if (o.contains("name")) s.outcome_name = o["name"].get<std::string>();
    if (o.contains("value")) s.outcome_value = o["value"].get<std::string>();
  }
  if (j.contains("covariates")) {
    const auto& c = j["covariates"];
    reject_unknown_keys(c, {"unit", "time", "name", "value", "categorical", "continuous"},
                        "schema.covariates");
    if (c.contains("unit")) s.cov_unit = c["unit"].get<std::string>();
    if (c.contains("time")) s.cov_time = c["time"].get<std::string>();
    if (c.contains("name")) s.cov_name = c["name"].get<std::string>();
    if (c.contains("value")) s.cov_value = c["value"].get<std::string>();
    if (c.contains("categorical"))
      s.categorical = c["categorical"].get<std::vector<std::string>>();
    if (c.contains("continuous"))
      s.continuous = c["continuous"].get<std::vector<std::string>>();
  }
  if (j.contains("exposures")) {
    const auto& e = j["exposures"];
    reject_unknown_keys(e, {"unit", "time", "never"}, "schema.exposures");
    if (e.contains("unit")) s.exp_unit = e["unit"].get<std::string>();
    if (e.contains("time")) s.exp_time = e["time"].get<std::string>();
    if (e.contains("never")) s.never_token = e["never"].get<std::string>();
  }
  return s;
}

namespace {

std::size_t need_column(const csv_table& t, const std::string& name, const std::string& path) {
  auto idx = t.column(name);
  if (!idx) fail(errc::parse, path + ": missing column '" + name + "'");
  return *idx;
}

}  // namespace

panel_dataset load_panel(const std::string& outcome_file, const std::string& covariate_file,
                         const std::string& exposure_file, const panel_schema& schema) {
  panel_dataset d;

  csv_table outcomes = read_csv(outcome_file);
  std::size_t ou = need_column(outcomes, schema.outcome_unit, outcome_file);
  std::size_t ot = need_column(outcomes, schema.outcome_time, outcome_file);
  std::size_t on = need_column(outcomes, schema.outcome_name, outcome_file);
  std::size_t ov = need_column(outcomes, schema.outcome_value, outcome_file);

  // pass 1: collect units, time labels, outcome names
  std::set<std::string> unit_ids, outcome_names;
  std::set<long> raw_times;
  for (const auto& row : outcomes.rows) {
    unit_ids.insert(row[ou]);
    raw_times.insert(parse_long(row[ot], outcome_file));
    outcome_names.insert(row[on]);
  }
  if (raw_times.empty()) fail(errc::parse, outcome_file + ": no data rows");

  d.time_labels.assign(raw_times.begin(), raw_times.end());
  d.t_max = static_cast<int>(d.time_labels.size());
  d.outcome_names.assign(outcome_names.begin(), outcome_names.end());

  std::map<long, int> time_of_label;
  for (int t = 1; t <= d.t_max; ++t) time_of_label[d.time_labels[t - 1]] = t;

  d.units.reserve(unit_ids.size());
  for (const auto& id : unit_ids) {
    unit_record u;
    u.id = id;
    for (const auto& name : d.outcome_names)
      u.outcomes[name].assign(static_cast<std::size_t>(d.t_max),
                              std::numeric_limits<double>::quiet_NaN());
    d.units.push_back(std::move(u));
  }
  d.rebuild_index();

  // pass 2: fill outcome cells, detecting duplicates
  for (const auto& row : outcomes.rows) {
    std::size_t ui = d.unit_index[row[ou]];
    int t = time_of_label[parse_long(row[ot], outcome_file)];
    auto& series = d.units[ui].outcomes[row[on]];
    double& cell = series[static_cast<std::size_t>(t - 1)];
    if (!std::isnan(cell))
      fail(errc::duplicate_row, "duplicate outcome row: unit " + row[ou] + ", time " +
                                    row[ot] + ", outcome " + row[on]);
    cell = parse_double(row[ov], outcome_file);
  }
  for (const auto& u : d.units)
    for (const auto& [name, series] : u.outcomes)
      for (int t = 1; t <= d.t_max; ++t)
        if (std::isnan(series[static_cast<std::size_t>(t - 1)]))
          fail(errc::missing_data, "missing outcome: unit " + u.id + ", time " +
                                       std::to_string(d.time_labels[t - 1]) + ", outcome " +
                                       name);

  // covariates
  if (!covariate_file.empty()) {
    csv_table covs = read_csv(covariate_file);
    std::size_t cu = need_column(covs, schema.cov_unit, covariate_file);
    std::size_t ct = need_column(covs, schema.cov_time, covariate_file);
    std::size_t cn = need_column(covs, schema.cov_name, covariate_file);
    std::size_t cv = need_column(covs, schema.cov_value, covariate_file);

    std::set<std::string> cat_set(schema.categorical.begin(), schema.categorical.end());
    std::set<std::string> cont_set(schema.continuous.begin(), schema.continuous.end());

    for (const auto& row : covs.rows) {
      const std::string& name = row[cn];
      bool is_cat = cat_set.count(name) > 0;
      if (!is_cat && !cont_set.count(name)) {
        // unlisted covariates default to continuous when numeric-looking
        char* end = nullptr;
        std::strtod(row[cv].c_str(), &end);
        is_cat = (end == row[cv].c_str() || *end != '\0');
        (is_cat ? cat_set : cont_set).insert(name);
      }
      auto uit = d.unit_index.find(row[cu]);
      if (uit == d.unit_index.end())
        fail(errc::parse, covariate_file + ": unit '" + row[cu] + "' not present in outcomes");
      unit_record& u = d.units[uit->second];

      bool all_times = row[ct].empty();
      int t = 0;
      if (!all_times) {
        long label = parse_long(row[ct], covariate_file);
        auto tit = time_of_label.find(label);
        if (tit == time_of_label.end())
          fail(errc::parse, covariate_file + ": unknown time '" + row[ct] + "'");
        t = tit->second;
      }

      if (is_cat) {
        auto& series = u.categorical[name];
        if (all_times) {
          if (!series.constant.empty() || series.varying())
            fail(errc::duplicate_row,
                 "duplicate categorical row: unit " + u.id + ", covariate " + name);
          series.constant = row[cv];
        } else {
          if (!series.constant.empty())
            fail(errc::duplicate_row,
                 "categorical covariate " + name + " mixes constant and timed rows for unit " +
                     u.id);
          if (!series.varying())
            series.per_time.assign(static_cast<std::size_t>(d.t_max), "");
          std::string& cell = series.per_time[static_cast<std::size_t>(t - 1)];
          if (!cell.empty())
            fail(errc::duplicate_row, "duplicate categorical row: unit " + u.id +
                                          ", time " + row[ct] + ", covariate " + name);
          cell = row[cv];
        }
      } else {
        auto& series = u.continuous[name];
        if (series.empty())
          series.assign(static_cast<std::size_t>(d.t_max),
                        std::numeric_limits<double>::quiet_NaN());
        double value = parse_double(row[cv], covariate_file);
        if (all_times) {
          for (double& cell : series) {
            if (!std::isnan(cell))
              fail(errc::duplicate_row,
                   "duplicate continuous row: unit " + u.id + ", covariate " + name);
            cell = value;
          }
        } else {
          double& cell = series[static_cast<std::size_t>(t - 1)];
          if (!std::isnan(cell))
            fail(errc::duplicate_row, "duplicate continuous row: unit " + u.id + ", time " +
                                          row[ct] + ", covariate " + name);
          cell = value;
        }
      }
    }
    std::set<std::string> cat_names, cont_names;
    for (const auto& u : d.units) {
      for (const auto& [n, _] : u.categorical) cat_names.insert(n);
      for (const auto& [n, _] : u.continuous) cont_names.insert(n);
    }
    d.categorical_names.assign(cat_names.begin(), cat_names.end());
    d.continuous_names.assign(cont_names.begin(), cont_names.end());
  }

  // exposures
  if (!exposure_file.empty()) {
    csv_table exp = read_csv(exposure_file);
    std::size_t eu = need_column(exp, schema.exp_unit, exposure_file);
    std::size_t et = need_column(exp, schema.exp_time, exposure_file);
    for (const auto& row : exp.rows) {
      auto uit = d.unit_index.find(row[eu]);
      if (uit == d.unit_index.end())
        fail(errc::parse, exposure_file + ": unit '" + row[eu] + "' not present in outcomes");
      unit_record& u = d.units[uit->second];
      const std::string& v = row[et];
      if (v.empty() || v == schema.never_token) continue;  // never exposed
      long label = parse_long(v, exposure_file);
      auto tit = time_of_label.find(label);
      if (tit == time_of_label.end())
        fail(errc::bad_exposure, "exposure time " + v + " for unit " + u.id +
                                     " is outside the observed panel times");
      if (u.exposure)
        fail(errc::duplicate_row, "duplicate exposure row for unit " + u.id);
      u.exposure = tit->second;
    }
  }

  return d;
}

validation_report validate_panel(const panel_dataset& d) {
  validation_report report;
  auto add = [&](const std::string& kind, const std::string& detail) {
    report.issues.push_back({kind, detail});
  };

  if (d.t_max <= 0) add("empty_panel", "t_max is not positive");
  if (d.time_labels.size() != static_cast<std::size_t>(d.t_max))
    add("time_index", "time label count does not match t_max");
  for (std::size_t i = 1; i < d.time_labels.size(); ++i)
    if (d.time_labels[i] <= d.time_labels[i - 1])
      add("time_index", "time labels not strictly increasing at position " + std::to_string(i));

  std::set<std::string> seen;
  for (const auto& u : d.units) {
    if (!seen.insert(u.id).second) add("duplicate_unit", "unit id '" + u.id + "' appears twice");
    if (u.exposure && (*u.exposure < 1 || *u.exposure > d.t_max))
      add("bad_exposure", "unit " + u.id + " exposed at " + std::to_string(*u.exposure) +
                              " outside 1.." + std::to_string(d.t_max));
    for (const auto& name : d.outcome_names) {
      auto it = u.outcomes.find(name);
      if (it == u.outcomes.end() || it->second.size() != static_cast<std::size_t>(d.t_max)) {
        add("missing_outcome", "unit " + u.id + " lacks a complete series for '" + name + "'");
        continue;
      }
      for (int t = 1; t <= d.t_max; ++t)
        if (std::isnan(it->second[static_cast<std::size_t>(t - 1)]))
          add("missing_outcome",
              "unit " + u.id + " outcome '" + name + "' missing at time " + std::to_string(t));
    }
    int horizon = u.exposure ? *u.exposure : d.t_max + 1;
    for (const auto& [name, series] : u.continuous) {
      for (int t = 1; t < horizon && t <= d.t_max; ++t)
        if (std::isnan(series[static_cast<std::size_t>(t - 1)]))
          add("missing_covariate", "unit " + u.id + " continuous covariate '" + name +
                                       "' missing at pre-exposure time " + std::to_string(t));
    }
  }
  return report;
}

std::string panel_to_json(const panel_dataset& d) {
  json j;
  j["version"] = "panel/v1";
  j["t_max"] = d.t_max;
  j["time_labels"] = d.time_labels;
  j["outcomes"] = d.outcome_names;
  j["categorical"] = d.categorical_names;
  j["continuous"] = d.continuous_names;
  json units = json::array();
  for (const auto& u : d.units) {
    json ju;
    ju["id"] = u.id;
    if (u.exposure) ju["exposure"] = *u.exposure;
    else ju["exposure"] = nullptr;
    json cat;
    for (const auto& [n, s] : u.categorical) {
      if (s.varying()) cat[n] = s.per_time;
      else cat[n] = s.constant;
    }
    ju["cat"] = std::move(cat);
    json cont;
    for (const auto& [n, s] : u.continuous) {
      json arr = json::array();
      for (double v : s) {
        if (std::isnan(v)) arr.push_back(nullptr);
        else arr.push_back(v);
      }
      cont[n] = std::move(arr);
    }
    ju["cont"] = std::move(cont);
    json y;
    for (const auto& [n, s] : u.outcomes) y[n] = s;
    ju["y"] = std::move(y);
    units.push_back(std::move(ju));
  }
  j["units"] = std::move(units);
  return j.dump();
}

panel_dataset panel_from_json(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) fail(errc::parse, "panel json: invalid JSON");
  if (!j.contains("version") || j["version"] != "panel/v1")
    fail(errc::parse, "panel json: missing or unsupported version");
  panel_dataset d;
  d.t_max = j["t_max"].get<int>();
  d.time_labels = j["time_labels"].get<std::vector<long>>();
  d.outcome_names = j["outcomes"].get<std::vector<std::string>>();
  d.categorical_names = j["categorical"].get<std::vector<std::string>>();
  d.continuous_names = j["continuous"].get<std::vector<std::string>>();
  for (const auto& ju : j["units"]) {
    unit_record u;
    u.id = ju["id"].get<std::string>();
    if (!ju["exposure"].is_null()) u.exposure = ju["exposure"].get<int>();
    for (auto it = ju["cat"].begin(); it != ju["cat"].end(); ++it) {
      categorical_series s;
      if (it.value().is_string()) s.constant = it.value().get<std::string>();
      else s.per_time = it.value().get<std::vector<std::string>>();
      u.categorical[it.key()] = std::move(s);
    }
    for (auto it = ju["cont"].begin(); it != ju["cont"].end(); ++it) {
      std::vector<double> s;
      for (const auto& v : it.value())
        s.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
      u.continuous[it.key()] = std::move(s);
    }
    for (auto it = ju["y"].begin(); it != ju["y"].end(); ++it)
      u.outcomes[it.key()] = it.value().get<std::vector<double>>();
    d.units.push_back(std::move(u));
  }
  d.rebuild_index();
  return d;
}

void write_panel(const panel_dataset& d, const std::string& dir) {
  std::filesystem::create_directories(dir);

  csv_table outcomes;
  outcomes.header = {"unit_id", "time", "outcome", "value"};
  for (const auto& u : d.units)
    for (const auto& [name, series] : u.outcomes)
      for (int t = 1; t <= d.t_max; ++t)
        outcomes.rows.push_back({u.id, std::to_string(d.time_labels[t - 1]), name,
                                 format_double(series[static_cast<std::size_t>(t - 1)])});
  write_csv(dir + "/outcomes.csv", outcomes);

  csv_table covs;
  covs.header = {"unit_id", "time", "covariate", "value"};
  for (const auto& u : d.units) {
    for (const auto& [name, s] : u.categorical) {
      if (s.varying()) {
        for (int t = 1; t <= d.t_max; ++t) {
          const std::string& v = s.per_time[static_cast<std::size_t>(t - 1)];
          if (!v.empty())
            covs.rows.push_back({u.id, std::to_string(d.time_labels[t - 1]), name, v});
        }
      } else {
        covs.rows.push_back({u.id, "", name, s.constant});
      }
    }
    for (const auto& [name, s] : u.continuous) {
      for (int t = 1; t <= d.t_max; ++t) {
        double v = s[static_cast<std::size_t>(t - 1)];
        if (!std::isnan(v))
          covs.rows.push_back({u.id, std::to_string(d.time_labels[t - 1]), name,
                               format_double(v)});
      }
    }
  }
  write_csv(dir + "/covariates.csv", covs);

  csv_table exposures;
  exposures.header = {"unit_id", "exposure_time"};
  for (const auto& u : d.units)
    exposures.rows.push_back(
        {u.id, u.exposure ? std::to_string(d.time_labels[*u.exposure - 1]) : ""});
  write_csv(dir + "/exposures.csv", exposures);

  std::ofstream js(dir + "/panel.json", std::ios::binary);
  if (!js) fail(errc::io, "cannot write " + dir + "/panel.json");
  js << panel_to_json(d);

  // schema matching the files above, with declared covariate kinds
  json schema;
  schema["covariates"]["categorical"] = d.categorical_names;
  schema["covariates"]["continuous"] = d.continuous_names;
  std::ofstream ss(dir + "/schema.json", std::ios::binary);
  if (!ss) fail(errc::io, "cannot write " + dir + "/schema.json");
  ss << schema.dump(2);
}

}  // namespace riskdid
