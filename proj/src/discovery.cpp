#include "riskdid/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "riskdid/errors.hpp"
#include "riskdid/rand.hpp"

namespace riskdid {

std::vector<bool> split_assignment(std::span<const study_set> sets, const split_plan& plan) {
  std::size_t n = sets.size();
  if (n < 2) fail(errc::split, "need at least two sets to split");
  if (!(plan.discovery_fraction > 0.0 && plan.discovery_fraction < 1.0))
    fail(errc::split, "discovery fraction must lie in (0,1)");
  std::size_t n_disc = static_cast<std::size_t>(
      std::llround(plan.discovery_fraction * static_cast<double>(n)));
  if (n_disc < 1) n_disc = 1;
  if (n_disc > n - 1) n_disc = n - 1;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng r(derive_seed(plan.seed, 4242));
  r.shuffle(order);
  std::vector<bool> discovery(n, false);
  for (std::size_t i = 0; i < n_disc; ++i) discovery[order[i]] = true;
  return discovery;
}

std::pair<matched_design, matched_design> split_design(const matched_design& design,
                                                       const split_plan& plan) {
  std::size_t n = design.sets.size();
  if (n < 2) fail(errc::split, "need at least two sets to split");
  // reuse the set-level assignment by wrapping set ids in dummy study sets
  std::vector<study_set> dummies(n);
  for (std::size_t i = 0; i < n; ++i) dummies[i].set_id = design.sets[i].set_id;
  std::vector<bool> discovery = split_assignment(dummies, plan);

  matched_design a, b;
  a.spec = design.spec;
  b.spec = design.spec;
  for (std::size_t i = 0; i < n; ++i)
    (discovery[i] ? a : b).sets.push_back(design.sets[i]);
  return {a, b};
}

namespace {

double sse_of(std::span<const double> y, std::span<const std::size_t> idx) {
  if (idx.empty()) return 0.0;
  double m = 0.0;
  for (std::size_t i : idx) m += y[i];
  m /= static_cast<double>(idx.size());
  double s = 0.0;
  for (std::size_t i : idx) {
    double d = y[i] - m;
    s += d * d;
  }
  return s;
}

double mean_of(std::span<const double> y, std::span<const std::size_t> idx) {
  double m = 0.0;
  for (std::size_t i : idx) m += y[i];
  return idx.empty() ? 0.0 : m / static_cast<double>(idx.size());
}

struct split_choice {
  bool found = false;
  double gain = 0.0;
  std::string covariate;
  bool numeric = true;
  double threshold = 0.0;
  std::vector<std::string> left_categories;
  std::vector<std::size_t> left, right;
};

// prefers larger gain; ties by covariate name, then threshold/categories
bool better_split(const split_choice& a, const split_choice& b) {
  if (!b.found) return a.found;
  if (!a.found) return false;
  if (a.gain != b.gain) return a.gain > b.gain;
  if (a.covariate != b.covariate) return a.covariate < b.covariate;
  if (a.numeric != b.numeric) return a.numeric;
  if (a.numeric) return a.threshold < b.threshold;
  return a.left_categories < b.left_categories;
}

split_choice best_numeric_split(std::span<const study_set> sets, std::span<const double> y,
                                const std::vector<std::size_t>& idx, const std::string& name,
                                int min_leaf) {
  split_choice best;
  std::vector<std::pair<double, std::size_t>> vals;
  vals.reserve(idx.size());
  for (std::size_t i : idx) {
    auto it = sets[i].numeric_features.find(name);
    if (it == sets[i].numeric_features.end()) return best;  // stratum guarantees presence
    vals.push_back({it->second, i});
  }
  std::sort(vals.begin(), vals.end());
  std::size_t n = vals.size();

  // prefix sums over the sorted order
  std::vector<double> ps(n + 1, 0.0), ps2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    ps[i + 1] = ps[i] + y[vals[i].second];
    ps2[i + 1] = ps2[i] + y[vals[i].second] * y[vals[i].second];
  }
  double total_sse = ps2[n] - ps[n] * ps[n] / static_cast<double>(n);

  for (std::size_t cut = 1; cut < n; ++cut) {
    if (vals[cut].first == vals[cut - 1].first) continue;  // not a boundary
    if (cut < static_cast<std::size_t>(min_leaf) ||
        n - cut < static_cast<std::size_t>(min_leaf))
      continue;
    double ln = static_cast<double>(cut), rn = static_cast<double>(n - cut);
    double lsse = ps2[cut] - ps[cut] * ps[cut] / ln;
    double rsse = (ps2[n] - ps2[cut]) - (ps[n] - ps[cut]) * (ps[n] - ps[cut]) / rn;
    double gain = total_sse - lsse - rsse;
    split_choice cand;
    cand.found = true;
    cand.gain = gain;
    cand.covariate = name;
    cand.numeric = true;
    cand.threshold = 0.5 * (vals[cut - 1].first + vals[cut].first);
    if (better_split(cand, best)) {
      best = cand;
      best.left.clear();
      best.right.clear();
      for (std::size_t i = 0; i < n; ++i)
        (i < cut ? best.left : best.right).push_back(vals[i].second);
    }
  }
  return best;
}

split_choice best_categorical_split(std::span<const study_set> sets, std::span<const double> y,
                                    const std::vector<std::size_t>& idx, const std::string& name,
                                    int min_leaf) {
  split_choice best;
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i : idx) {
    auto it = sets[i].label_features.find(name);
    if (it == sets[i].label_features.end()) return best;
    by_label[it->second].push_back(i);
  }
  std::size_t c = by_label.size();
  if (c < 2) return best;

  std::vector<std::string> labels;
  std::vector<double> sums, counts;
  for (const auto& [label, members] : by_label) {
    labels.push_back(label);
    double s = 0.0;
    for (std::size_t i : members) s += y[i];
    sums.push_back(s);
    counts.push_back(static_cast<double>(members.size()));
  }
  double total_sum = 0.0, total_n = 0.0;
  for (std::size_t i : idx) {
    total_sum += y[i];
    total_n += 1.0;
  }

  auto evaluate = [&](const std::vector<std::size_t>& left_labels) {
    double lsum = 0.0, lcount = 0.0;
    for (std::size_t li : left_labels) {
      lsum += sums[li];
      lcount += counts[li];
    }
    double rsum = total_sum - lsum, rcount = total_n - lcount;
    if (lcount < min_leaf || rcount < min_leaf) return;
    // SSE decomposition: between-group improvement only needs group means
    double gain = lsum * lsum / lcount + rsum * rsum / rcount - total_sum * total_sum / total_n;
    split_choice cand;
    cand.found = true;
    cand.gain = gain;
    cand.covariate = name;
    cand.numeric = false;
    for (std::size_t li : left_labels) cand.left_categories.push_back(labels[li]);
    std::sort(cand.left_categories.begin(), cand.left_categories.end());
    if (better_split(cand, best)) {
      best = cand;
      best.left.clear();
      best.right.clear();
      std::set<std::string> left_set(cand.left_categories.begin(), cand.left_categories.end());
      for (std::size_t i : idx) {
        const std::string& label = sets[i].label_features.at(name);
        (left_set.count(label) ? best.left : best.right).push_back(i);
      }
    }
  };

  if (c <= 10) {
    // all binary partitions, canonicalized by keeping label 0 on the left
    std::size_t combos = std::size_t{1} << (c - 1);
    std::vector<std::size_t> left_labels;
    for (std::size_t mask = 1; mask < combos; ++mask) {
      left_labels.clear();
      left_labels.push_back(0);
      for (std::size_t li = 1; li < c; ++li)
        if (mask & (std::size_t{1} << (li - 1))) left_labels.push_back(li);
      if (left_labels.size() == c) continue;
      evaluate(left_labels);
    }
  } else {
    // order labels by mean response, then scan the prefixes
    std::vector<std::size_t> order(c);
    for (std::size_t i = 0; i < c; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      double ma = sums[a] / counts[a], mb = sums[b] / counts[b];
      if (ma != mb) return ma < mb;
      return labels[a] < labels[b];
    });
    std::vector<std::size_t> left_labels;
    for (std::size_t cut = 1; cut < c; ++cut) {
      left_labels.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
      evaluate(left_labels);
    }
  }
  return best;
}

}  // namespace

std::size_t regression_tree::n_leaves() const {
  std::size_t n = 0;
  for (const auto& node : nodes)
    if (node.leaf) ++n;
  return n;
}

std::optional<int> regression_tree::leaf_of(const study_set& s) const {
  if (nodes.empty()) return std::nullopt;
  int cur = 0;
  while (!nodes[static_cast<std::size_t>(cur)].leaf) {
    const tree_node& node = nodes[static_cast<std::size_t>(cur)];
    bool go_left;
    if (node.numeric) {
      auto it = s.numeric_features.find(node.covariate);
      if (it == s.numeric_features.end()) return std::nullopt;
      go_left = it->second <= node.threshold;
    } else {
      auto it = s.label_features.find(node.covariate);
      if (it == s.label_features.end()) return std::nullopt;
      go_left = std::find(node.left_categories.begin(), node.left_categories.end(),
                          it->second) != node.left_categories.end();
    }
    cur = go_left ? node.left : node.right;
  }
  return cur;
}

std::vector<int> regression_tree::leaf_node_ids() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].leaf) out.push_back(static_cast<int>(i));
  return out;
}

namespace {

std::string split_text(const tree_node& node, bool left_side) {
  std::ostringstream os;
  if (node.numeric) {
    os << node.covariate << (left_side ? "<=" : ">") << node.threshold;
  } else {
    os << node.covariate << (left_side ? " in {" : " not in {");
    for (std::size_t i = 0; i < node.left_categories.size(); ++i) {
      if (i) os << ",";
      os << node.left_categories[i];
    }
    os << "}";
  }
  return os.str();
}

void find_path(const std::vector<tree_node>& nodes, int target, int cur,
               std::vector<std::string>& acc, bool& found) {
  if (cur == target) {
    found = true;
    return;
  }
  const tree_node& node = nodes[static_cast<std::size_t>(cur)];
  if (node.leaf) return;
  acc.push_back(split_text(node, true));
  find_path(nodes, target, node.left, acc, found);
  if (found) return;
  acc.back() = split_text(node, false);
  find_path(nodes, target, node.right, acc, found);
  if (!found) acc.pop_back();
}

}  // namespace

std::string regression_tree::path_label(int node_id) const {
  if (node_id == 0) return "(all)";
  std::vector<std::string> parts;
  bool found = false;
  find_path(nodes, node_id, 0, parts, found);
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += " & ";
    out += parts[i];
  }
  return out.empty() ? "(all)" : out;
}

std::string regression_tree::describe() const {
  std::ostringstream os;
  std::function<void(int, int)> walk = [&](int id, int indent) {
    const tree_node& node = nodes[static_cast<std::size_t>(id)];
    os << std::string(static_cast<std::size_t>(indent) * 2, ' ');
    if (node.leaf) {
      os << "leaf n=" << node.n_sets << " mean=" << node.node_mean << "\n";
    } else {
      os << "split " << split_text(node, true) << " n=" << node.n_sets << "\n";
      walk(node.left, indent + 1);
      walk(node.right, indent + 1);
    }
  };
  if (!nodes.empty()) walk(0, 0);
  return os.str();
}

regression_tree fit_cart(std::span<const study_set> sets, std::span<const double> responses,
                         const std::vector<std::string>& covariates, const cart_params& params) {
  if (covariates.empty()) fail(errc::config, "no covariates to split on");
  if (sets.size() != responses.size()) fail(errc::config, "responses do not match sets");
  if (params.min_leaf < 1) fail(errc::config, "min_leaf must be positive");
  regression_tree tree;
  if (sets.empty()) return tree;

  std::vector<std::size_t> all(sets.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  double root_sse = sse_of(responses, all);
  double root_var = sets.size() > 1 ? root_sse / static_cast<double>(sets.size() - 1) : 0.0;
  double min_gain = std::max({params.complexity * root_sse,
                              params.gain_sigma2_scale * root_var,
                              1e-12 * (root_sse + 1.0)});

  struct work_item {
    int node_id;
    std::vector<std::size_t> idx;
  };

  tree_node root;
  root.n_sets = sets.size();
  root.node_mean = mean_of(responses, all);
  root.node_sse = root_sse;
  tree.nodes.push_back(root);

  std::vector<work_item> queue{{0, std::move(all)}};
  while (!queue.empty()) {
    work_item item = std::move(queue.back());
    queue.pop_back();
    tree_node& node = tree.nodes[static_cast<std::size_t>(item.node_id)];
    if (node.depth >= params.max_depth) continue;
    if (item.idx.size() < 2 * static_cast<std::size_t>(params.min_leaf)) continue;
    if (node.node_sse <= 0.0) continue;  // pure node

    split_choice best;
    for (const auto& name : covariates) {
      bool numeric = !sets[item.idx[0]].numeric_features.empty() &&
                     sets[item.idx[0]].numeric_features.count(name) > 0;
      split_choice cand =
          numeric ? best_numeric_split(sets, responses, item.idx, name, params.min_leaf)
                  : best_categorical_split(sets, responses, item.idx, name, params.min_leaf);
      if (better_split(cand, best)) best = std::move(cand);
    }
    if (!best.found || best.gain <= 1e-12 * (root_sse + 1.0)) continue;

    tree_node left, right;
    left.depth = right.depth = node.depth + 1;
    left.n_sets = best.left.size();
    right.n_sets = best.right.size();
    left.node_mean = mean_of(responses, best.left);
    right.node_mean = mean_of(responses, best.right);
    left.node_sse = sse_of(responses, best.left);
    right.node_sse = sse_of(responses, best.right);

    node.leaf = false;
    node.covariate = best.covariate;
    node.numeric = best.numeric;
    node.threshold = best.threshold;
    node.left_categories = best.left_categories;
    node.left = static_cast<int>(tree.nodes.size());
    node.right = node.left + 1;
    int left_id = node.left;
    int right_id = node.right;
    tree.nodes.push_back(std::move(left));
    tree.nodes.push_back(std::move(right));
    queue.push_back({left_id, std::move(best.left)});
    queue.push_back({right_id, std::move(best.right)});
  }

  // weakest-link cost-complexity pruning at min_gain per extra leaf
  for (;;) {
    int weakest = -1;
    double weakest_value = std::numeric_limits<double>::infinity();
    // per-node leaf counts and subtree SSE
    std::function<std::pair<std::size_t, double>(int)> subtree = [&](int id)
        -> std::pair<std::size_t, double> {
      const tree_node& node = tree.nodes[static_cast<std::size_t>(id)];
      if (node.leaf) return {1, node.node_sse};
      auto l = subtree(node.left);
      auto r = subtree(node.right);
      std::size_t leaves = l.first + r.first;
      double sse = l.second + r.second;
      double value = (node.node_sse - sse) / static_cast<double>(leaves - 1);
      if (value < weakest_value) {
        weakest_value = value;
        weakest = id;
      }
      return {leaves, sse};
    };
    if (tree.nodes.empty() || tree.nodes[0].leaf) break;
    subtree(0);
    if (weakest < 0 || weakest_value >= min_gain) break;
    tree_node& node = tree.nodes[static_cast<std::size_t>(weakest)];
    node.leaf = true;
    node.left = node.right = -1;
    node.covariate.clear();
    node.left_categories.clear();
  }

  // drop nodes orphaned by collapses, remapping child links
  std::vector<int> new_id(tree.nodes.size(), -1);
  std::vector<tree_node> kept;
  std::function<void(int)> visit = [&](int id) {
    new_id[static_cast<std::size_t>(id)] = static_cast<int>(kept.size());
    kept.push_back(tree.nodes[static_cast<std::size_t>(id)]);
    const tree_node& node = tree.nodes[static_cast<std::size_t>(id)];
    if (!node.leaf) {
      visit(node.left);
      visit(node.right);
    }
  };
  if (!tree.nodes.empty()) visit(0);
  for (auto& node : kept) {
    if (!node.leaf) {
      node.left = new_id[static_cast<std::size_t>(node.left)];
      node.right = new_id[static_cast<std::size_t>(node.right)];
    }
  }
  tree.nodes = std::move(kept);
  return tree;
}

discovery_model fit_discovery_model(std::span<const study_set> discovery_sets,
                                    const std::vector<std::string>& covariates,
                                    const cart_params& params) {
  if (covariates.empty()) fail(errc::config, "no covariates for discovery");
  if (discovery_sets.empty()) fail(errc::empty_design, "no discovery sets");

  discovery_model model;
  model.discovery_mean = point_estimate(discovery_sets);

  // availability stratum: which requested covariates the set carries,
  // canonically sorted so lookups agree regardless of request order
  std::map<std::vector<std::string>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < discovery_sets.size(); ++i) {
    std::vector<std::string> have;
    for (const auto& name : covariates)
      if (discovery_sets[i].numeric_features.count(name) ||
          discovery_sets[i].label_features.count(name))
        have.push_back(name);
    std::sort(have.begin(), have.end());
    strata[have].push_back(i);
  }

  for (const auto& [available, members] : strata) {
    stratum_tree st;
    st.available_covariates = available;
    st.n_discovery_sets = members.size();
    std::vector<study_set> subset;
    std::vector<double> responses;
    subset.reserve(members.size());
    for (std::size_t i : members) {
      subset.push_back(discovery_sets[i]);
      responses.push_back(discovery_sets[i].observed_contribution(0.0) - model.discovery_mean);
    }
    if (!available.empty() && members.size() >= 2 * static_cast<std::size_t>(params.min_leaf)) {
      st.tree = fit_cart(subset, responses, available, params);
    } else {
      tree_node root;
      root.n_sets = members.size();
      root.node_mean = mean(responses);
      st.tree.nodes.push_back(root);
    }
    model.strata.push_back(std::move(st));
  }
  return model;
}

namespace {

std::vector<std::string> stratum_signature(const study_set& s,
                                           const std::vector<std::string>& requested) {
  std::vector<std::string> have;
  for (const auto& name : requested)
    if (s.numeric_features.count(name) || s.label_features.count(name)) have.push_back(name);
  return have;
}

}  // namespace

group_extraction extract_groups(const discovery_model& model, std::span<const study_set> sets) {
  group_extraction out;
  // map (stratum, leaf node id) -> group index
  std::vector<std::map<int, std::size_t>> leaf_group(model.strata.size());
  std::vector<std::string> requested;
  {
    std::set<std::string> names;
    for (const auto& st : model.strata)
      names.insert(st.available_covariates.begin(), st.available_covariates.end());
    requested.assign(names.begin(), names.end());
  }

  for (std::size_t si = 0; si < model.strata.size(); ++si) {
    const auto& st = model.strata[si];
    for (int leaf_id : st.tree.leaf_node_ids()) {
      leaf_group[si][leaf_id] = out.n_groups;
      std::string prefix = model.strata.size() > 1
                               ? "stratum" + std::to_string(si + 1) + ": "
                               : "";
      out.group_labels.push_back(prefix + st.tree.path_label(leaf_id));
      ++out.n_groups;
    }
  }

  out.group_of_set.assign(sets.size(), -1);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    auto sig = stratum_signature(sets[i], requested);
    for (std::size_t si = 0; si < model.strata.size(); ++si) {
      if (model.strata[si].available_covariates != sig) continue;
      auto leaf = model.strata[si].tree.leaf_of(sets[i]);
      if (leaf) out.group_of_set[i] = static_cast<int>(leaf_group[si].at(*leaf));
      break;
    }
  }

  // comparisons: every node of every stratum tree, leaves first
  out.cmat.n_groups = out.n_groups;
  for (std::size_t si = 0; si < model.strata.size(); ++si) {
    const auto& st = model.strata[si];
    std::string prefix =
        model.strata.size() > 1 ? "stratum" + std::to_string(si + 1) + ": " : "";
    // leaf rows
    for (int leaf_id : st.tree.leaf_node_ids()) {
      out.cmat.members.push_back({leaf_group[si].at(leaf_id)});
      out.cmat.labels.push_back(prefix + st.tree.path_label(leaf_id));
      out.comparison_is_leaf_group.push_back(static_cast<int>(leaf_group[si].at(leaf_id)));
    }
    // internal rows: union of descendant leaves
    std::function<std::vector<std::size_t>(int)> descend = [&](int id) {
      const tree_node& node = st.tree.nodes[static_cast<std::size_t>(id)];
      if (node.leaf) return std::vector<std::size_t>{leaf_group[si].at(id)};
      auto l = descend(node.left);
      auto r = descend(node.right);
      l.insert(l.end(), r.begin(), r.end());
      std::sort(l.begin(), l.end());
      return l;
    };
    for (std::size_t ni = 0; ni < st.tree.nodes.size(); ++ni) {
      if (st.tree.nodes[ni].leaf) continue;
      out.cmat.members.push_back(descend(static_cast<int>(ni)));
      out.cmat.labels.push_back(prefix + st.tree.path_label(static_cast<int>(ni)));
      out.comparison_is_leaf_group.push_back(-1);
    }
  }
  return out;
}

discovery_result discover_and_confirm(std::span<const study_set> sets, const split_plan& plan,
                                      const std::vector<std::string>& covariates,
                                      const cart_params& params, const submax_options& options) {
  std::vector<bool> is_discovery = split_assignment(sets, plan);
  std::vector<study_set> discovery, testing;
  for (std::size_t i = 0; i < sets.size(); ++i)
    (is_discovery[i] ? discovery : testing).push_back(sets[i]);
  if (discovery.empty() || testing.empty()) fail(errc::split, "split produced an empty side");

  discovery_result result;
  result.n_discovery_sets = discovery.size();
  result.n_testing_sets = testing.size();
  result.model = fit_discovery_model(discovery, covariates, params);

  group_extraction extraction = extract_groups(result.model, testing);

  // drop leaves with no testing sets, remapping groups and comparisons
  std::vector<std::size_t> group_count(extraction.n_groups, 0);
  for (int g : extraction.group_of_set)
    if (g >= 0) group_count[static_cast<std::size_t>(g)]++;
  std::vector<int> remap(extraction.n_groups, -1);
  std::size_t kept = 0;
  for (std::size_t g = 0; g < extraction.n_groups; ++g)
    if (group_count[g] > 0) remap[g] = static_cast<int>(kept++);

  std::vector<int> group_of_set(extraction.group_of_set.size(), -1);
  for (std::size_t i = 0; i < group_of_set.size(); ++i)
    if (extraction.group_of_set[i] >= 0)
      group_of_set[i] = remap[static_cast<std::size_t>(extraction.group_of_set[i])];

  comparison_matrix cmat;
  cmat.n_groups = kept;
  std::vector<int> leaf_group_of_comparison;
  for (std::size_t k = 0; k < extraction.cmat.members.size(); ++k) {
    std::vector<std::size_t> members;
    for (std::size_t g : extraction.cmat.members[k])
      if (remap[g] >= 0) members.push_back(static_cast<std::size_t>(remap[g]));
    if (members.empty()) continue;  // comparison lost all its groups
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    // internal rows that collapsed to an existing row are still kept; they
    // carry their own label
    cmat.members.push_back(std::move(members));
    cmat.labels.push_back(extraction.cmat.labels[k]);
    leaf_group_of_comparison.push_back(extraction.comparison_is_leaf_group[k] >= 0
                                           ? remap[static_cast<std::size_t>(
                                                 extraction.comparison_is_leaf_group[k])]
                                           : -1);
  }

  if (kept == 0) fail(errc::empty_design, "no testing sets fell into any leaf");
  result.confirmation = minmax_test(testing, group_of_set, kept, cmat, options);

  // per-leaf reports: interval and sensitivity on the leaf's testing sets
  std::vector<std::size_t> leaf_comparison(kept, static_cast<std::size_t>(-1));
  for (std::size_t k = 0; k < leaf_group_of_comparison.size(); ++k)
    if (leaf_group_of_comparison[k] >= 0)
      leaf_comparison[static_cast<std::size_t>(leaf_group_of_comparison[k])] = k;

  // dropped leaves first, flagged
  for (std::size_t g = 0; g < extraction.n_groups; ++g) {
    if (remap[g] >= 0) continue;
    leaf_report lr;
    lr.label = extraction.group_labels[g];
    lr.dropped = true;
    result.leaves.push_back(std::move(lr));
  }
  for (std::size_t g = 0; g < kept; ++g) {
    leaf_report lr;
    std::size_t k = leaf_comparison[g];
    lr.label = k != static_cast<std::size_t>(-1) ? cmat.labels[k] : "leaf" + std::to_string(g);
    std::vector<study_set> leaf_sets;
    for (std::size_t i = 0; i < testing.size(); ++i)
      if (group_of_set[i] == static_cast<int>(g)) leaf_sets.push_back(testing[i]);
    lr.n_sets = leaf_sets.size();
    lr.estimate = point_estimate(leaf_sets);
    auto ci = confidence_interval(leaf_sets, options.alpha, 1.0);
    lr.ci_lower = ci.first;
    lr.ci_upper = ci.second;
    lr.gamma = gamma_star(leaf_sets, options.alpha, tail::two_sided, 0.0);
    if (k != static_cast<std::size_t>(-1))
      lr.rejected = result.confirmation.per_comparison[k].rejected;
    result.leaves.push_back(std::move(lr));
  }
  return result;
}

r2_bounds effect_variation_bounds(std::span<const study_set> sets,
                                  const std::vector<std::string>& covariates) {
  if (covariates.empty()) fail(errc::config, "no covariates for effect-variation bounds");

  // complete cases over the requested covariates
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    bool ok = true;
    for (const auto& name : covariates)
      if (!sets[i].numeric_features.count(name) && !sets[i].label_features.count(name))
        ok = false;
    if (ok) idx.push_back(i);
  }

  // column layout: intercept, numeric covariates, one-hot categories minus a
  // reference level
  std::vector<std::string> numeric_cols;
  std::vector<std::pair<std::string, std::string>> label_cols;  // (covariate, level)
  for (const auto& name : covariates) {
    bool numeric = false, labelled = false;
    std::set<std::string> levels;
    for (std::size_t i : idx) {
      if (sets[i].numeric_features.count(name)) numeric = true;
      auto it = sets[i].label_features.find(name);
      if (it != sets[i].label_features.end()) {
        labelled = true;
        levels.insert(it->second);
      }
    }
    if (numeric) numeric_cols.push_back(name);
    else if (labelled) {
      bool first = true;
      for (const auto& level : levels) {
        if (first) {
          first = false;  // reference level absorbed by the intercept
          continue;
        }
        label_cols.push_back({name, level});
      }
    }
  }
  std::size_t p = 1 + numeric_cols.size() + label_cols.size();
  if (idx.size() < p + 2)
    fail(errc::domain, "need at least K+2 sets for K regression columns");

  std::vector<double> y;
  y.reserve(idx.size());
  double ybar = 0.0;
  for (std::size_t i : idx) {
    y.push_back(sets[i].observed_contribution(0.0));
    ybar += y.back();
  }
  ybar /= static_cast<double>(y.size());
  for (double& v : y) v -= ybar;

  std::vector<std::vector<double>> x_rows;
  x_rows.reserve(idx.size());
  for (std::size_t i : idx) {
    std::vector<double> row;
    row.reserve(p);
    row.push_back(1.0);
    for (const auto& name : numeric_cols) row.push_back(sets[i].numeric_features.at(name));
    for (const auto& [name, level] : label_cols)
      row.push_back(sets[i].label_features.at(name) == level ? 1.0 : 0.0);
    x_rows.push_back(std::move(row));
  }

  r2_bounds out;
  std::vector<double> beta;
  out.ridge_fallback = !solve_least_squares(x_rows, y, beta);

  double ss_total = 0.0, ss_model = 0.0;
  double fit_mean = 0.0;
  std::vector<double> fitted(y.size());
  for (std::size_t r = 0; r < y.size(); ++r) {
    double f = 0.0;
    for (std::size_t c = 0; c < p; ++c) f += x_rows[r][c] * beta[c];
    fitted[r] = f;
    fit_mean += f;
  }
  fit_mean /= static_cast<double>(y.size());
  for (std::size_t r = 0; r < y.size(); ++r) {
    ss_total += y[r] * y[r];
    double d = fitted[r] - fit_mean;
    ss_model += d * d;
  }

  if (ss_total <= 0.0) return out;  // constant responses: both bounds zero

  double n = static_cast<double>(y.size());
  double total_var = ss_total / (n - 1.0);
  double sys_var = ss_model / (n - 1.0);
  out.lower = std::clamp(ss_model / ss_total, 0.0, 1.0);

  // within-set noise from control-only variability
  double pooled_num = 0.0, pooled_df = 0.0;
  double inv_m_mean = 0.0;
  for (std::size_t i : idx) {
    const auto& s = sets[i];
    std::vector<double> controls;
    for (std::size_t j = 0; j < s.quantities.size(); ++j)
      if (j != s.observed_index) controls.push_back(s.quantities[j]);
    inv_m_mean += 1.0 + 1.0 / static_cast<double>(controls.size());
    if (controls.size() >= 2) {
      pooled_num += sample_variance(controls) * static_cast<double>(controls.size() - 1);
      pooled_df += static_cast<double>(controls.size() - 1);
    }
  }
  inv_m_mean /= n;
  double noise_var = pooled_df > 0.0 ? (pooled_num / pooled_df) * inv_m_mean : 0.0;

  double effect_var_lb = total_var - noise_var;
  if (effect_var_lb <= sys_var) {
    out.upper = 1.0;
  } else {
    out.upper = sys_var / effect_var_lb;
  }
  out.upper = std::clamp(out.upper, out.lower, 1.0);
  return out;
}

discovery_result discover_and_confirm(const matched_design& design, const panel_dataset& d,
                                      const std::string& outcome, horizon h,
                                      const split_plan& plan,
                                      const std::vector<std::string>& covariates,
                                      const cart_params& params, const submax_options& options) {
  contrast_study study = build_study(design, d, outcome, h, covariates);
  if (study.sets.empty()) fail(errc::empty_design, "no usable sets");
  return discover_and_confirm(study.sets, plan, covariates, params, options);
}

r2_bounds effect_variation_bounds(const matched_design& design, const panel_dataset& d,
                                  const std::string& outcome, horizon h,
                                  const std::vector<std::string>& covariates) {
  contrast_study study = build_study(design, d, outcome, h, covariates);
  if (study.sets.empty()) fail(errc::empty_design, "no usable sets");
  return effect_variation_bounds(study.sets, covariates);
}

std::string tree_to_json(const discovery_result& result) {
  nlohmann::json j;
  j["version"] = "tree/v1";
  j["discovery_sets"] = result.n_discovery_sets;
  j["testing_sets"] = result.n_testing_sets;
  nlohmann::json strata = nlohmann::json::array();
  for (const auto& st : result.model.strata) {
    nlohmann::json js;
    js["covariates"] = st.available_covariates;
    js["n_discovery_sets"] = st.n_discovery_sets;
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t i = 0; i < st.tree.nodes.size(); ++i) {
      const auto& node = st.tree.nodes[i];
      nlohmann::json jn;
      jn["id"] = i;
      jn["leaf"] = node.leaf;
      jn["n_sets"] = node.n_sets;
      jn["mean"] = node.node_mean;
      if (!node.leaf) {
        jn["covariate"] = node.covariate;
        if (node.numeric) jn["threshold"] = node.threshold;
        else jn["left_categories"] = node.left_categories;
        jn["left"] = node.left;
        jn["right"] = node.right;
      }
      nodes.push_back(std::move(jn));
    }
    js["nodes"] = std::move(nodes);
    strata.push_back(std::move(js));
  }
  j["strata"] = std::move(strata);
  nlohmann::json leaves = nlohmann::json::array();
  for (const auto& leaf : result.leaves) {
    nlohmann::json jl;
    jl["label"] = leaf.label;
    jl["dropped"] = leaf.dropped;
    if (!leaf.dropped) {
      jl["n_testing_sets"] = leaf.n_sets;
      jl["estimate"] = leaf.estimate;
      jl["ci_lower"] = leaf.ci_lower;
      jl["ci_upper"] = leaf.ci_upper;
      if (leaf.gamma.applicable)
        jl["gamma_star"] = leaf.gamma.capped ? ">10.00" : std::to_string(leaf.gamma.value);
      else jl["gamma_star"] = "NA";
      jl["rejected"] = leaf.rejected;
    }
    leaves.push_back(std::move(jl));
  }
  j["leaves"] = std::move(leaves);
  return j.dump(2);
}

}  // namespace riskdid
