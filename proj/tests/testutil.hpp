#pragma once

#include <map>
#include <string>
#include <vector>

#include "riskdid/contrasts.hpp"
#include "riskdid/matching.hpp"
#include "riskdid/panel.hpp"
#include "riskdid/rand.hpp"

namespace testutil {

using namespace riskdid;

// Rectangular panel builder for hand-made fixtures.
struct panel_builder {
  panel_dataset d;

  explicit panel_builder(int t_max) {
    d.t_max = t_max;
    for (int t = 1; t <= t_max; ++t) d.time_labels.push_back(t);
    d.outcome_names = {"y"};
  }

  panel_builder& unit(const std::string& id, std::optional<int> exposure,
                      const std::vector<double>& y) {
    unit_record u;
    u.id = id;
    u.exposure = exposure;
    u.outcomes["y"] = y;
    d.units.push_back(std::move(u));
    d.rebuild_index();
    return *this;
  }

  panel_builder& continuous(const std::string& unit_id, const std::string& name, double value) {
    auto& u = d.units[d.index_of(unit_id)];
    u.continuous[name].assign(static_cast<std::size_t>(d.t_max), value);
    if (std::find(d.continuous_names.begin(), d.continuous_names.end(), name) ==
        d.continuous_names.end())
      d.continuous_names.push_back(name);
    return *this;
  }

  panel_builder& continuous_series(const std::string& unit_id, const std::string& name,
                                   const std::vector<double>& values) {
    auto& u = d.units[d.index_of(unit_id)];
    u.continuous[name] = values;
    if (std::find(d.continuous_names.begin(), d.continuous_names.end(), name) ==
        d.continuous_names.end())
      d.continuous_names.push_back(name);
    return *this;
  }

  panel_builder& categorical(const std::string& unit_id, const std::string& name,
                             const std::string& label) {
    auto& u = d.units[d.index_of(unit_id)];
    u.categorical[name].constant = label;
    if (std::find(d.categorical_names.begin(), d.categorical_names.end(), name) ==
        d.categorical_names.end())
      d.categorical_names.push_back(name);
    return *this;
  }
};

// Flat outcome series helper.
inline std::vector<double> flat(int t_max, double level) {
  return std::vector<double>(static_cast<std::size_t>(t_max), level);
}

// A study set built directly from member quantities (treated first).
inline study_set make_set(int id, const std::vector<double>& quantities,
                          std::size_t observed = 0) {
  study_set s;
  s.set_id = id;
  s.quantities = quantities;
  s.observed_index = observed;
  return s;
}

// Random small designs for oracle comparisons.
inline std::vector<study_set> random_design(rng& r, int max_sets = 8, int max_units = 4) {
  int n_sets = 1 + static_cast<int>(r.below(static_cast<std::uint64_t>(max_sets)));
  std::vector<study_set> sets;
  for (int i = 0; i < n_sets; ++i) {
    int n = 2 + static_cast<int>(r.below(static_cast<std::uint64_t>(max_units - 1)));
    std::vector<double> q;
    for (int j = 0; j < n; ++j) q.push_back(r.normal(0.0, 1.0 + r.uniform()));
    sets.push_back(make_set(i + 1, q, r.below(static_cast<std::uint64_t>(n))));
  }
  return sets;
}

// Exhaustive enumeration over all treated-position assignments: exact null
// mean and variance of the total statistic at gamma = 1.
struct exact_moments {
  double mean = 0.0;
  double variance = 0.0;
};

inline exact_moments enumerate_uniform_moments(const std::vector<study_set>& sets, double tau0) {
  // collect per-set score vectors
  std::vector<std::vector<double>> scores(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) sets[i].assignment_scores(tau0, scores[i]);

  std::size_t combos = 1;
  for (const auto& s : scores) combos *= s.size();

  double sum = 0.0, sumsq = 0.0;
  std::vector<std::size_t> pick(sets.size(), 0);
  for (std::size_t c = 0; c < combos; ++c) {
    std::size_t rest = c;
    double t = 0.0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      std::size_t n = scores[i].size();
      t += scores[i][rest % n];
      rest /= n;
    }
    sum += t;
    sumsq += t * t;
  }
  exact_moments out;
  out.mean = sum / static_cast<double>(combos);
  out.variance = sumsq / static_cast<double>(combos) - out.mean * out.mean;
  return out;
}

}  // namespace testutil
