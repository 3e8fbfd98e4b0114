#include "riskdid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "riskdid/errors.hpp"
#include "riskdid/rand.hpp"

namespace riskdid {

using nlohmann::json;

namespace {

double draw(const dist_spec& d, rng& r) {
  if (d.family == "point") return d.mean;
  if (d.family == "normal") return r.normal(d.mean, d.sd);
  if (d.family == "uniform") return r.uniform(d.mean - d.sd, d.mean + d.sd);
  fail(errc::config, "unknown distribution family '" + d.family + "'");
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_config(const synth_config& cfg) {
  if (cfg.n_units <= 0) fail(errc::config, "n_units must be positive");
  if (cfg.t_max <= 0) fail(errc::config, "t_max must be positive");
  if (cfg.outcome_names.empty()) fail(errc::config, "at least one outcome required");
  for (const auto& cov : cfg.covariates) {
    if (cov.is_categorical) {
      if (cov.levels.empty() || cov.levels.size() != cov.probs.size())
        fail(errc::config, "covariate '" + cov.name + "': levels and probs must align");
      double total = 0.0;
      for (double p : cov.probs) {
        if (p < 0.0) fail(errc::config, "covariate '" + cov.name + "': negative probability");
        total += p;
      }
      if (std::fabs(total - 1.0) > 1e-9)
        fail(errc::config, "covariate '" + cov.name + "': probabilities must sum to 1");
    }
  }
  if (cfg.noise.family != "point" && cfg.noise.sd < 0.0)
    fail(errc::config, "noise sd must be nonnegative");
  if (cfg.hazard.start < 1) fail(errc::config, "hazard start must be >= 1");
}

dist_spec dist_from_json(const json& j, const std::string& where) {
  dist_spec d;
  if (j.is_number()) {
    d.family = "point";
    d.mean = j.get<double>();
    return d;
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "family" && it.key() != "mean" && it.key() != "sd")
      fail(errc::config, "unknown key '" + it.key() + "' in " + where);
  if (j.contains("family")) d.family = j["family"].get<std::string>();
  if (j.contains("mean")) d.mean = j["mean"].get<double>();
  if (j.contains("sd")) d.sd = j["sd"].get<double>();
  return d;
}

json dist_to_json(const dist_spec& d) {
  return json{{"family", d.family}, {"mean", d.mean}, {"sd", d.sd}};
}

}  // namespace

synth_config parse_synth_config(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) fail(errc::parse, "synth config: invalid JSON");
  synth_config cfg;
  const std::vector<std::string> allowed = {
      "n_units", "t_max",  "outcomes", "baseline", "time_shock", "cohort_shock",
      "noise",   "noise_loadings", "covariates", "hazard", "effect", "seed",
      "force_exposure"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      fail(errc::config, "unknown key '" + it.key() + "' in synth config");

  if (j.contains("n_units")) cfg.n_units = j["n_units"].get<int>();
  if (j.contains("t_max")) cfg.t_max = j["t_max"].get<int>();
  if (j.contains("outcomes")) cfg.outcome_names = j["outcomes"].get<std::vector<std::string>>();
  if (j.contains("baseline")) cfg.baseline = dist_from_json(j["baseline"], "baseline");
  if (j.contains("time_shock")) cfg.time_shock = dist_from_json(j["time_shock"], "time_shock");
  if (j.contains("cohort_shock"))
    cfg.cohort_shock = dist_from_json(j["cohort_shock"], "cohort_shock");
  if (j.contains("noise")) cfg.noise = dist_from_json(j["noise"], "noise");
  if (j.contains("noise_loadings"))
    cfg.noise_loadings = j["noise_loadings"].get<std::map<std::string, double>>();
  if (j.contains("covariates")) {
    for (const auto& jc : j["covariates"]) {
      synth_covariate cov;
      for (auto it = jc.begin(); it != jc.end(); ++it) {
        const std::string& k = it.key();
        if (k != "name" && k != "kind" && k != "levels" && k != "probs" && k != "base" &&
            k != "walk_sd")
          fail(errc::config, "unknown key '" + k + "' in covariate spec");
      }
      cov.name = jc.at("name").get<std::string>();
      std::string kind = jc.contains("kind") ? jc["kind"].get<std::string>() : "continuous";
      if (kind == "categorical") {
        cov.is_categorical = true;
        cov.levels = jc.at("levels").get<std::vector<std::string>>();
        cov.probs = jc.at("probs").get<std::vector<double>>();
      } else if (kind == "continuous") {
        if (jc.contains("base")) cov.base = dist_from_json(jc["base"], "covariate base");
        if (jc.contains("walk_sd")) cov.walk_sd = jc["walk_sd"].get<double>();
      } else {
        fail(errc::config, "covariate kind must be categorical or continuous");
      }
      cfg.covariates.push_back(std::move(cov));
    }
  }
  if (j.contains("hazard")) {
    const auto& h = j["hazard"];
    for (auto it = h.begin(); it != h.end(); ++it) {
      const std::string& k = it.key();
      if (k != "intercept" && k != "slopes" && k != "cat_shifts" && k != "gamma" && k != "start")
        fail(errc::config, "unknown key '" + k + "' in hazard spec");
    }
    if (h.contains("intercept")) cfg.hazard.intercept = h["intercept"].get<double>();
    if (h.contains("slopes")) cfg.hazard.slopes = h["slopes"].get<std::map<std::string, double>>();
    if (h.contains("cat_shifts"))
      cfg.hazard.cat_shifts =
          h["cat_shifts"].get<std::map<std::string, std::map<std::string, double>>>();
    if (h.contains("gamma")) cfg.hazard.gamma = h["gamma"].get<double>();
    if (h.contains("start")) cfg.hazard.start = h["start"].get<int>();
  }
  if (j.contains("effect")) {
    const auto& e = j["effect"];
    for (auto it = e.begin(); it != e.end(); ++it) {
      const std::string& k = it.key();
      if (k != "base" && k != "slopes" && k != "cat_shifts")
        fail(errc::config, "unknown key '" + k + "' in effect spec");
    }
    if (e.contains("base")) cfg.effect.base = e["base"].get<double>();
    if (e.contains("slopes")) cfg.effect.slopes = e["slopes"].get<std::map<std::string, double>>();
    if (e.contains("cat_shifts"))
      cfg.effect.cat_shifts =
          e["cat_shifts"].get<std::map<std::string, std::map<std::string, double>>>();
  }
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("force_exposure")) {
    for (auto it = j["force_exposure"].begin(); it != j["force_exposure"].end(); ++it) {
      if (it.value().is_null()) cfg.force_exposure[it.key()] = std::nullopt;
      else cfg.force_exposure[it.key()] = it.value().get<int>();
    }
  }
  return cfg;
}

std::string synth_config_to_json(const synth_config& cfg) {
  json j;
  j["n_units"] = cfg.n_units;
  j["t_max"] = cfg.t_max;
  j["outcomes"] = cfg.outcome_names;
  j["baseline"] = dist_to_json(cfg.baseline);
  j["time_shock"] = dist_to_json(cfg.time_shock);
  j["cohort_shock"] = dist_to_json(cfg.cohort_shock);
  j["noise"] = dist_to_json(cfg.noise);
  j["noise_loadings"] = cfg.noise_loadings;
  json covs = json::array();
  for (const auto& c : cfg.covariates) {
    json jc;
    jc["name"] = c.name;
    if (c.is_categorical) {
      jc["kind"] = "categorical";
      jc["levels"] = c.levels;
      jc["probs"] = c.probs;
    } else {
      jc["kind"] = "continuous";
      jc["base"] = dist_to_json(c.base);
      jc["walk_sd"] = c.walk_sd;
    }
    covs.push_back(std::move(jc));
  }
  j["covariates"] = std::move(covs);
  j["hazard"] = {{"intercept", cfg.hazard.intercept},
                 {"slopes", cfg.hazard.slopes},
                 {"cat_shifts", cfg.hazard.cat_shifts},
                 {"gamma", cfg.hazard.gamma},
                 {"start", cfg.hazard.start}};
  j["effect"] = {{"base", cfg.effect.base},
                 {"slopes", cfg.effect.slopes},
                 {"cat_shifts", cfg.effect.cat_shifts}};
  j["seed"] = cfg.seed;
  return j.dump();
}

panel_dataset synth_generate(const synth_config& cfg) {
  check_config(cfg);

  panel_dataset d;
  d.t_max = cfg.t_max;
  d.time_labels.resize(static_cast<std::size_t>(cfg.t_max));
  for (int t = 1; t <= cfg.t_max; ++t) d.time_labels[t - 1] = t;
  d.outcome_names = cfg.outcome_names;
  for (const auto& c : cfg.covariates)
    (c.is_categorical ? d.categorical_names : d.continuous_names).push_back(c.name);

  // shared shocks use their own streams so per-unit values are unaffected by
  // how many units exist
  rng time_rng(derive_seed(cfg.seed, 1));
  std::vector<double> alpha(static_cast<std::size_t>(cfg.t_max));
  for (auto& a : alpha) a = draw(cfg.time_shock, time_rng);

  rng cohort_rng(derive_seed(cfg.seed, 2));
  std::vector<double> beta(static_cast<std::size_t>(cfg.t_max) + 1);  // [T] = never
  for (auto& b : beta) b = draw(cfg.cohort_shock, cohort_rng);

  int width = 1;
  for (int v = cfg.n_units - 1; v >= 10; v /= 10) ++width;

  d.units.reserve(static_cast<std::size_t>(cfg.n_units));
  for (int i = 0; i < cfg.n_units; ++i) {
    unit_record u;
    std::string idx = std::to_string(i);
    u.id = "u" + std::string(static_cast<std::size_t>(width) - idx.size(), '0') + idx;

    // base stream: everything about the unit except its exposure draw
    rng base(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(i)));

    double mu = draw(cfg.baseline, base);

    for (const auto& cov : cfg.covariates) {
      if (cov.is_categorical) {
        categorical_series s;
        s.constant = cov.levels[base.categorical(cov.probs)];
        u.categorical[cov.name] = std::move(s);
      } else {
        std::vector<double> series(static_cast<std::size_t>(cfg.t_max));
        double x = draw(cov.base, base);
        for (int t = 1; t <= cfg.t_max; ++t) {
          series[t - 1] = x;
          if (cov.walk_sd > 0.0) x += base.normal(0.0, cov.walk_sd);
        }
        u.continuous[cov.name] = std::move(series);
      }
    }

    // latent unobserved covariate per period
    std::vector<double> latent(static_cast<std::size_t>(cfg.t_max));
    for (auto& v : latent) v = base.normal();

    // noise mean shift from covariates (baseline values)
    double noise_shift = 0.0;
    for (const auto& [name, loading] : cfg.noise_loadings) {
      auto it = u.continuous.find(name);
      if (it == u.continuous.end())
        fail(errc::config, "noise loading names unknown covariate '" + name + "'");
      noise_shift += loading * it->second[0];
    }

    // never-treated outcome table, independent of the exposure stream
    std::map<std::string, std::vector<double>> y0;
    for (const auto& name : cfg.outcome_names) {
      std::vector<double> series(static_cast<std::size_t>(cfg.t_max));
      for (int t = 1; t <= cfg.t_max; ++t)
        series[t - 1] = mu + alpha[t - 1] + noise_shift + draw(cfg.noise, base);
      y0[name] = std::move(series);
    }

    // exposure draw from its own stream
    std::optional<int> z;
    auto forced = cfg.force_exposure.find(u.id);
    if (forced != cfg.force_exposure.end()) {
      z = forced->second;
      if (z && (*z < 1 || *z > cfg.t_max))
        fail(errc::bad_exposure, "forced exposure outside 1..T for " + u.id);
    } else {
      rng expo(derive_seed(cfg.seed, 5000000 + static_cast<std::uint64_t>(i)));
      for (int t = cfg.hazard.start; t <= cfg.t_max && !z; ++t) {
        double lo = cfg.hazard.intercept;
        for (const auto& [name, slope] : cfg.hazard.slopes) {
          auto it = u.continuous.find(name);
          if (it == u.continuous.end())
            fail(errc::config, "hazard slope names unknown covariate '" + name + "'");
          lo += slope * it->second[static_cast<std::size_t>(t - 1)];
        }
        for (const auto& [name, shifts] : cfg.hazard.cat_shifts) {
          auto it = u.categorical.find(name);
          if (it == u.categorical.end())
            fail(errc::config, "hazard shift names unknown covariate '" + name + "'");
          auto sit = shifts.find(it->second.at(t));
          if (sit != shifts.end()) lo += sit->second;
        }
        lo += cfg.hazard.gamma * latent[static_cast<std::size_t>(t - 1)];
        if (expo.bernoulli(logistic(lo))) z = t;
      }
    }
    u.exposure = z;

    // observed outcomes: never-treated values plus the effect after exposure
    double unit_effect = cfg.effect.base;
    for (const auto& [name, slope] : cfg.effect.slopes) {
      auto it = u.continuous.find(name);
      if (it == u.continuous.end())
        fail(errc::config, "effect slope names unknown covariate '" + name + "'");
      unit_effect += slope * it->second[0];
    }
    for (const auto& [name, shifts] : cfg.effect.cat_shifts) {
      auto it = u.categorical.find(name);
      if (it == u.categorical.end())
        fail(errc::config, "effect shift names unknown covariate '" + name + "'");
      auto sit = shifts.find(it->second.at(1));
      if (sit != shifts.end()) unit_effect += sit->second;
    }

    double beta_term = beta[z ? static_cast<std::size_t>(*z - 1)
                             : static_cast<std::size_t>(cfg.t_max)];
    for (const auto& name : cfg.outcome_names) {
      std::vector<double> series = y0[name];
      for (int t = 1; t <= cfg.t_max; ++t) {
        series[t - 1] += beta_term;
        if (z && t >= *z) series[t - 1] += unit_effect;
      }
      u.outcomes[name] = std::move(series);
    }

    d.units.push_back(std::move(u));
  }
  d.rebuild_index();
  return d;
}

}  // namespace riskdid
