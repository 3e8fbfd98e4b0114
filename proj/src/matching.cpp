#include "riskdid/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "riskdid/errors.hpp"
#include "riskdid/mathutil.hpp"

namespace riskdid {

void match_spec::validate() const {
  if (max_controls < 1) fail(errc::config, "max_controls must be positive");
  if (min_controls < 1) fail(errc::config, "min_controls must be positive");
  if (min_controls > max_controls) fail(errc::config, "min_controls exceeds max_controls");
  for (const auto& c : calipers)
    if (!(c.width > 0.0)) fail(errc::config, "caliper for '" + c.covariate + "' must be > 0");
}

const matched_set& matched_design::set_by_id(int set_id) const {
  for (const auto& s : sets)
    if (s.set_id == set_id) return s;
  fail(errc::name, "unknown set id " + std::to_string(set_id));
}

std::map<int, risk_set> build_risk_sets(const panel_dataset& d) {
  std::map<int, risk_set> out;
  for (std::size_t i = 0; i < d.units.size(); ++i) {
    const auto& u = d.units[i];
    if (u.exposure) out[*u.exposure];  // ensure the slot exists
  }
  for (auto& [t, rs] : out) {
    for (std::size_t i = 0; i < d.units.size(); ++i) {
      const auto& u = d.units[i];
      if (u.exposure && *u.exposure == t) rs.exposed.push_back(i);
      else if (!u.exposure || *u.exposure > t) rs.eligible.push_back(i);
    }
    auto by_id = [&](std::size_t a, std::size_t b) { return d.units[a].id < d.units[b].id; };
    std::sort(rs.exposed.begin(), rs.exposed.end(), by_id);
    std::sort(rs.eligible.begin(), rs.eligible.end(), by_id);
  }
  return out;
}

namespace {

struct candidate {
  std::size_t unit = 0;                // index into d.units
  std::vector<double> values;          // caliper covariate values at match time
  double distance = 0.0;               // sum_k |x - x_treated| / delta_k
};

// caliper covariate values at the matching time; empty optional when any is
// missing (unit cannot be matched on the profile)
bool caliper_values(const panel_dataset& d, std::size_t unit, const match_spec& spec,
                    int match_time, std::vector<double>& out) {
  out.clear();
  out.reserve(spec.calipers.size());
  for (const auto& c : spec.calipers) {
    const auto& u = d.units[unit];
    auto it = u.continuous.find(c.covariate);
    if (it == u.continuous.end()) return false;
    double v = it->second[static_cast<std::size_t>(match_time - 1)];
    if (std::isnan(v)) return false;
    out.push_back(v);
  }
  return true;
}

bool exact_match(const panel_dataset& d, std::size_t a, std::size_t b,
                 const std::vector<std::string>& names, int match_time) {
  for (const auto& name : names) {
    const auto& ua = d.units[a];
    const auto& ub = d.units[b];
    auto ia = ua.categorical.find(name);
    auto ib = ub.categorical.find(name);
    if (ia == ua.categorical.end() || ib == ub.categorical.end()) return false;
    const std::string& va = ia->second.at(match_time);
    const std::string& vb = ib->second.at(match_time);
    if (va.empty() || vb.empty() || va != vb) return false;
  }
  return true;
}

bool within_calipers(const std::vector<const candidate*>& members,
                     const std::vector<double>& treated_values, const match_spec& spec) {
  for (std::size_t k = 0; k < spec.calipers.size(); ++k) {
    double sum = 0.0;
    for (const auto* m : members) sum += m->values[k];
    double mean = sum / static_cast<double>(members.size());
    if (std::fabs(treated_values[k] - mean) > spec.calipers[k].width + 1e-12) return false;
  }
  return true;
}

struct selection {
  std::vector<const candidate*> members;
  double distance = 0.0;

  std::vector<std::string> ids(const panel_dataset& d) const {
    std::vector<std::string> out;
    out.reserve(members.size());
    for (const auto* m : members) out.push_back(d.units[m->unit].id);
    std::sort(out.begin(), out.end());
    return out;
  }
};

// true when a is preferred: smaller summed distance, then smaller id vector
bool better_selection(const panel_dataset& d, const selection& a, const selection& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  return a.ids(d) < b.ids(d);
}

// Exhaustive search over subsets of a given size, largest size first.
bool exhaustive_select(const panel_dataset& d, const std::vector<candidate>& cands,
                       const std::vector<double>& treated_values, const match_spec& spec,
                       selection& out) {
  int n = static_cast<int>(cands.size());
  int top = std::min(spec.max_controls, n);
  std::vector<const candidate*> members;
  for (int size = top; size >= spec.min_controls; --size) {
    bool found = false;
    selection best;
    std::vector<int> idx(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (;;) {
      members.clear();
      double dist = 0.0;
      for (int i : idx) {
        members.push_back(&cands[static_cast<std::size_t>(i)]);
        dist += cands[static_cast<std::size_t>(i)].distance;
      }
      if (within_calipers(members, treated_values, spec)) {
        selection cur{members, dist};
        if (!found || better_selection(d, cur, best)) best = cur;
        found = true;
      }
      // next combination
      int i = size - 1;
      while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - size + i) --i;
      if (i < 0) break;
      ++idx[static_cast<std::size_t>(i)];
      for (int k = i + 1; k < size; ++k)
        idx[static_cast<std::size_t>(k)] = idx[static_cast<std::size_t>(k - 1)] + 1;
    }
    if (found) {
      out = best;
      return true;
    }
  }
  return false;
}

// Beam search for larger pools: states are combinations with ascending
// candidate indices, scored by caliper violation then summed distance. A
// greedy swap repair runs on near-feasible states before giving up on a size.
constexpr std::size_t kBeamWidth = 64;
constexpr std::size_t kExhaustivePoolLimit = 25;

struct beam_state {
  std::vector<int> members;            // candidate indices, ascending
  std::vector<double> sums;            // per caliper covariate
  double distance = 0.0;

  double violation(const std::vector<double>& treated_values, const match_spec& spec) const {
    double v = 0.0;
    double n = static_cast<double>(members.size());
    for (std::size_t k = 0; k < spec.calipers.size(); ++k) {
      double gap = std::fabs(treated_values[k] - sums[k] / n) - spec.calipers[k].width;
      if (gap > 0.0) v += gap / spec.calipers[k].width;
    }
    return v;
  }
};

bool beam_select(const panel_dataset& d, const std::vector<candidate>& cands,
                 const std::vector<double>& treated_values, const match_spec& spec,
                 selection& out) {
  int n = static_cast<int>(cands.size());
  std::size_t n_cal = spec.calipers.size();
  int top = std::min(spec.max_controls, n);

  for (int size = top; size >= spec.min_controls; --size) {
    std::vector<beam_state> beam{beam_state{{}, std::vector<double>(n_cal, 0.0), 0.0}};
    for (int step = 0; step < size; ++step) {
      std::vector<beam_state> next;
      for (const auto& state : beam) {
        int first = state.members.empty() ? 0 : state.members.back() + 1;
        for (int c = first; c <= n - (size - step); ++c) {
          beam_state ns = state;
          ns.members.push_back(c);
          for (std::size_t k = 0; k < n_cal; ++k)
            ns.sums[k] += cands[static_cast<std::size_t>(c)].values[k];
          ns.distance += cands[static_cast<std::size_t>(c)].distance;
          next.push_back(std::move(ns));
        }
      }
      std::sort(next.begin(), next.end(), [&](const beam_state& a, const beam_state& b) {
        double va = a.violation(treated_values, spec);
        double vb = b.violation(treated_values, spec);
        if (va != vb) return va < vb;
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.members < b.members;
      });
      if (next.size() > kBeamWidth) next.resize(kBeamWidth);
      beam = std::move(next);
      if (beam.empty()) break;
    }

    // feasible full states
    bool found = false;
    selection best;
    auto consider = [&](const beam_state& state) {
      std::vector<const candidate*> members;
      double dist = 0.0;
      for (int c : state.members) {
        members.push_back(&cands[static_cast<std::size_t>(c)]);
        dist += cands[static_cast<std::size_t>(c)].distance;
      }
      if (!within_calipers(members, treated_values, spec)) return;
      selection cur{members, dist};
      if (!found || better_selection(d, cur, best)) best = cur;
      found = true;
    };
    for (const auto& state : beam) consider(state);

    // swap repair on the most promising infeasible states
    if (!found) {
      std::size_t tried = 0;
      for (const auto& state : beam) {
        if (tried++ >= 8) break;
        beam_state cur = state;
        std::set<int> inside(cur.members.begin(), cur.members.end());
        for (int iter = 0; iter < 2 * size; ++iter) {
          if (cur.violation(treated_values, spec) == 0.0) break;
          double best_gain = 0.0;
          int best_out = -1, best_in = -1;
          double base_violation = cur.violation(treated_values, spec);
          for (std::size_t mi = 0; mi < cur.members.size(); ++mi) {
            int m = cur.members[mi];
            for (int c = 0; c < n; ++c) {
              if (inside.count(c)) continue;
              beam_state probe = cur;
              probe.members[mi] = c;
              for (std::size_t k = 0; k < n_cal; ++k)
                probe.sums[k] += cands[static_cast<std::size_t>(c)].values[k] -
                                 cands[static_cast<std::size_t>(m)].values[k];
              double gain = base_violation - probe.violation(treated_values, spec);
              if (gain > best_gain + 1e-15) {
                best_gain = gain;
                best_out = static_cast<int>(mi);
                best_in = c;
              }
            }
          }
          if (best_in < 0) break;
          int old = cur.members[static_cast<std::size_t>(best_out)];
          for (std::size_t k = 0; k < n_cal; ++k)
            cur.sums[k] += cands[static_cast<std::size_t>(best_in)].values[k] -
                           cands[static_cast<std::size_t>(old)].values[k];
          cur.distance += cands[static_cast<std::size_t>(best_in)].distance -
                          cands[static_cast<std::size_t>(old)].distance;
          cur.members[static_cast<std::size_t>(best_out)] = best_in;
          inside.erase(old);
          inside.insert(best_in);
        }
        if (cur.violation(treated_values, spec) == 0.0) {
          std::sort(cur.members.begin(), cur.members.end());
          consider(cur);
        }
      }
    }

    if (found) {
      out = best;
      return true;
    }
  }
  return false;
}

}  // namespace

profile_match_result profile_match_one(const panel_dataset& d, std::size_t treated,
                                       std::span<const std::size_t> pool,
                                       const match_spec& spec, int t) {
  spec.validate();
  profile_match_result result;
  int match_time = t - 1;
  if (match_time < 1) return result;  // no pre-exposure period to match on

  std::vector<double> treated_values;
  if (!caliper_values(d, treated, spec, match_time, treated_values)) return result;

  std::vector<candidate> cands;
  std::vector<double> values;
  for (std::size_t unit : pool) {
    if (unit == treated) continue;
    if (!exact_match(d, treated, unit, spec.exact_covariates, match_time)) continue;
    if (!caliper_values(d, unit, spec, match_time, values)) continue;
    candidate c;
    c.unit = unit;
    c.values = values;
    for (std::size_t k = 0; k < values.size(); ++k)
      c.distance += std::fabs(values[k] - treated_values[k]) / spec.calipers[k].width;
    cands.push_back(std::move(c));
  }
  if (cands.size() < static_cast<std::size_t>(spec.min_controls)) return result;

  // deterministic candidate order: by distance, then unit id
  std::sort(cands.begin(), cands.end(), [&](const candidate& a, const candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return d.units[a.unit].id < d.units[b.unit].id;
  });

  selection chosen;
  bool ok = cands.size() <= kExhaustivePoolLimit
                ? exhaustive_select(d, cands, treated_values, spec, chosen)
                : beam_select(d, cands, treated_values, spec, chosen);
  if (!ok) return result;

  // feasibility certificate: the returned set must satisfy every caliper
  if (!within_calipers(chosen.members, treated_values, spec))
    fail(errc::internal, "profile match produced an infeasible set");

  result.feasible = true;
  for (const auto* m : chosen.members) result.controls.push_back(m->unit);
  std::sort(result.controls.begin(), result.controls.end(),
            [&](std::size_t a, std::size_t b) { return d.units[a].id < d.units[b].id; });
  return result;
}

matched_design run_risk_set_matching(const panel_dataset& d, const match_spec& spec) {
  spec.validate();
  matched_design design;
  design.spec = spec;

  auto risk_sets = build_risk_sets(d);
  std::vector<bool> consumed(d.units.size(), false);
  int next_set_id = 1;

  for (const auto& [t, rs] : risk_sets) {
    design_audit::time_row row;
    row.time = t;
    row.exposed = static_cast<int>(rs.exposed.size());

    for (std::size_t treated : rs.exposed) {
      if (consumed[treated]) {
        design.audit.dropped.push_back({d.units[treated].id, t, "consumed_as_control"});
        ++row.dropped;
        continue;
      }
      if (t <= 1) {
        consumed[treated] = true;
        design.audit.dropped.push_back({d.units[treated].id, t, "no_pre_period"});
        ++row.dropped;
        continue;
      }
      std::vector<std::size_t> pool;
      pool.reserve(rs.eligible.size());
      for (std::size_t u : rs.eligible)
        if (!consumed[u]) pool.push_back(u);

      auto res = profile_match_one(d, treated, pool, spec, t);
      consumed[treated] = true;
      if (!res.feasible) {
        design.audit.dropped.push_back({d.units[treated].id, t, "infeasible"});
        ++row.dropped;
        continue;
      }
      matched_set set;
      set.set_id = next_set_id++;
      set.exposure_time = t;
      set.treated_unit = d.units[treated].id;
      for (std::size_t u : res.controls) {
        set.control_units.push_back(d.units[u].id);
        consumed[u] = true;
      }
      design.audit.set_size_histogram[static_cast<int>(set.control_units.size())]++;
      design.sets.push_back(std::move(set));
      ++row.matched;
    }
    design.audit.per_time.push_back(row);
  }
  return design;
}

balance_report compute_asamd(const matched_design& design, const panel_dataset& d,
                             const std::function<bool(const matched_set&)>& subgroup,
                             const std::string& subgroup_label) {
  std::vector<const matched_set*> selected;
  for (const auto& s : design.sets)
    if (subgroup(s)) selected.push_back(&s);
  if (selected.empty()) fail(errc::empty_design, "subgroup selects no matched sets");

  balance_report report;

  // per covariate accessor returning the value at a set's match time, NaN if absent
  auto add_metric = [&](const std::string& label,
                        const std::function<double(const unit_record&, int)>& value_at) {
    std::vector<double> treated_per_set, control_means_per_set, all_values;
    for (const auto* s : selected) {
      int mt = s->match_time();
      double tv = value_at(d.units[d.index_of(s->treated_unit)], mt);
      if (std::isnan(tv)) continue;
      std::vector<double> controls;
      for (const auto& cid : s->control_units) {
        double cv = value_at(d.units[d.index_of(cid)], mt);
        if (!std::isnan(cv)) controls.push_back(cv);
      }
      if (controls.empty()) continue;
      treated_per_set.push_back(tv);
      control_means_per_set.push_back(mean(controls));
      all_values.push_back(tv);
      for (double cv : controls) all_values.push_back(cv);
    }
    if (treated_per_set.empty()) return;

    balance_row row;
    row.covariate = label;
    row.subgroup = subgroup_label;
    row.treated_mean = mean(treated_per_set);
    row.control_mean = mean(control_means_per_set);
    row.pooled_sd = sample_sd(all_values);
    double gap = std::fabs(row.treated_mean - row.control_mean);
    if (row.pooled_sd > 0.0) {
      row.asamd = gap / row.pooled_sd;
    } else if (gap <= 1e-12) {
      row.asamd = 0.0;
    } else {
      row.asamd = std::numeric_limits<double>::quiet_NaN();
      row.degenerate_scale = true;
    }
    report.rows.push_back(std::move(row));
  };

  for (const auto& name : d.continuous_names) {
    add_metric(name, [&](const unit_record& u, int t) {
      auto it = u.continuous.find(name);
      if (it == u.continuous.end()) return std::numeric_limits<double>::quiet_NaN();
      return it->second[static_cast<std::size_t>(t - 1)];
    });
  }
  for (const auto& name : d.categorical_names) {
    // collect the observed levels, then one indicator row per level
    std::set<std::string> levels;
    for (const auto* s : selected) {
      int mt = s->match_time();
      const auto& tu = d.units[d.index_of(s->treated_unit)];
      auto it = tu.categorical.find(name);
      if (it != tu.categorical.end() && !it->second.at(mt).empty())
        levels.insert(it->second.at(mt));
      for (const auto& cid : s->control_units) {
        const auto& cu = d.units[d.index_of(cid)];
        auto ic = cu.categorical.find(name);
        if (ic != cu.categorical.end() && !ic->second.at(mt).empty())
          levels.insert(ic->second.at(mt));
      }
    }
    for (const auto& level : levels) {
      add_metric(name + "=" + level, [&](const unit_record& u, int t) {
        auto it = u.categorical.find(name);
        if (it == u.categorical.end() || it->second.at(t).empty())
          return std::numeric_limits<double>::quiet_NaN();
        return it->second.at(t) == level ? 1.0 : 0.0;
      });
    }
  }
  return report;
}

aggregation_bound_result aggregation_balance_bound(const matched_design& design,
                                                   const panel_dataset& d,
                                                   std::span<const int> set_ids,
                                                   const std::string& covariate) {
  if (set_ids.empty()) fail(errc::config, "aggregation subset is empty");
  double delta = -1.0;
  for (const auto& c : design.spec.calipers)
    if (c.covariate == covariate) delta = c.width;
  if (delta < 0.0) fail(errc::name, "covariate '" + covariate + "' has no caliper in this design");

  double treated_sum = 0.0, control_sum = 0.0;
  long control_count = 0;
  std::vector<double> control_means, sizes;
  for (int id : set_ids) {
    const matched_set& s = design.set_by_id(id);
    int mt = s.match_time();
    treated_sum += d.units[d.index_of(s.treated_unit)].continuous_at(covariate, mt);
    double csum = 0.0;
    for (const auto& cid : s.control_units)
      csum += d.units[d.index_of(cid)].continuous_at(covariate, mt);
    control_sum += csum;
    control_count += static_cast<long>(s.control_units.size());
    control_means.push_back(csum / static_cast<double>(s.control_units.size()));
    sizes.push_back(static_cast<double>(s.control_units.size()));
  }
  double n_sets = static_cast<double>(set_ids.size());

  aggregation_bound_result out;
  out.attained =
      std::fabs(treated_sum / n_sets - control_sum / static_cast<double>(control_count));

  bool equal_sizes = true;
  for (double m : sizes)
    if (m != sizes[0]) equal_sizes = false;
  if (equal_sizes) {
    out.bound = delta;
  } else {
    double total = 0.0;
    for (double m : sizes) total += m;
    double penalty = 0.0;
    for (std::size_t j = 0; j < sizes.size(); ++j) {
      double w = sizes[j] * n_sets / total;
      penalty += std::fabs(1.0 - w) * std::fabs(control_means[j]);
    }
    out.bound = delta + penalty;
  }
  return out;
}

}  // namespace riskdid
