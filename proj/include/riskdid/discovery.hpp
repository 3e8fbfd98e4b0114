#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "riskdid/submax.hpp"

namespace riskdid {

struct split_plan {
  double discovery_fraction = 0.25;
  std::uint64_t seed = 0;
};

// Split by matched set, never by unit; sizes honored within one set.
// Returns true for sets assigned to the discovery half, aligned with sets.
std::vector<bool> split_assignment(std::span<const study_set> sets, const split_plan& plan);

std::pair<matched_design, matched_design> split_design(const matched_design& design,
                                                       const split_plan& plan);

struct cart_params {
  int min_leaf = 20;
  int max_depth = 4;
  // a split must reduce SSE by at least this fraction of the root SSE
  double complexity = 0.01;
  // additional absolute gain floor in units of the root response variance
  // (a chi-square-style threshold whose implied mean-difference cutoff
  // shrinks with sample size); 0 disables it
  double gain_sigma2_scale = 0.0;
};

struct tree_node {
  bool leaf = true;
  int left = -1;
  int right = -1;
  int depth = 0;
  std::string covariate;
  bool numeric = true;
  double threshold = 0.0;                     // numeric: x <= threshold goes left
  std::vector<std::string> left_categories;   // categorical: these labels go left
  double node_mean = 0.0;
  double node_sse = 0.0;
  std::size_t n_sets = 0;
};

struct regression_tree {
  std::vector<tree_node> nodes;  // nodes[0] is the root; empty = untrained

  std::size_t n_leaves() const;
  // index into nodes of the leaf this set falls in, or nullopt when a
  // feature needed along the path is missing
  std::optional<int> leaf_of(const study_set& s) const;
  std::vector<int> leaf_node_ids() const;
  std::string path_label(int node_id) const;  // conjunction of split predicates
  std::string describe() const;               // indented text rendering
};

// Greedy variance-reduction CART on set-level centered contrasts, followed
// by weakest-link cost-complexity pruning at complexity * root SSE.
regression_tree fit_cart(std::span<const study_set> sets, std::span<const double> responses,
                         const std::vector<std::string>& covariates, const cart_params& params);

// Trees are fit separately per feature-availability stratum so area-level
// covariates missing for part of the sample never block discovery.
struct stratum_tree {
  std::vector<std::string> available_covariates;
  regression_tree tree;
  std::size_t n_discovery_sets = 0;
};

struct discovery_model {
  std::vector<stratum_tree> strata;
  double discovery_mean = 0.0;  // centering used for the responses
};

discovery_model fit_discovery_model(std::span<const study_set> discovery_sets,
                                    const std::vector<std::string>& covariates,
                                    const cart_params& params);

// Leaf-membership groups plus the comparison matrix with one row per leaf
// and one row per internal node (union of its descendant leaves).
struct group_extraction {
  std::vector<int> group_of_set;  // aligned with the input sets; -1 = no stratum/leaf
  std::size_t n_groups = 0;
  comparison_matrix cmat;
  std::vector<std::string> group_labels;       // per leaf group
  std::vector<int> comparison_is_leaf_group;   // -1 for internal rows, else group index
};

group_extraction extract_groups(const discovery_model& model, std::span<const study_set> sets);

struct leaf_report {
  std::string label;
  std::size_t n_sets = 0;         // testing-split sets in the leaf
  double estimate = 0.0;          // point estimate on the leaf's testing sets
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  gamma_star_result gamma;
  bool rejected = false;          // closed-testing decision for the leaf row
  bool dropped = false;           // empty on the testing split
};

struct discovery_result {
  discovery_model model;
  submax_result confirmation;
  std::vector<leaf_report> leaves;
  std::size_t n_discovery_sets = 0;
  std::size_t n_testing_sets = 0;
};

// Full de novo pipeline on pre-built study sets: split, CART on the
// discovery half, submax confirmation with closed testing on the testing
// half, per-leaf intervals and sensitivity values.
discovery_result discover_and_confirm(std::span<const study_set> sets, const split_plan& plan,
                                      const std::vector<std::string>& covariates,
                                      const cart_params& params, const submax_options& options);

struct r2_bounds {
  double lower = 0.0;
  double upper = 0.0;
  bool ridge_fallback = false;
};

// Randomization-based bounds on the share of treatment-effect variation a
// linear function of the covariates can explain. The denominator of the
// lower bound keeps the idiosyncratic noise; the upper bound removes a
// within-set noise estimate taken from control-only variability.
r2_bounds effect_variation_bounds(std::span<const study_set> sets,
                                  const std::vector<std::string>& covariates);

// Panel-level wrappers.
discovery_result discover_and_confirm(const matched_design& design, const panel_dataset& d,
                                      const std::string& outcome, horizon h,
                                      const split_plan& plan,
                                      const std::vector<std::string>& covariates,
                                      const cart_params& params, const submax_options& options);

r2_bounds effect_variation_bounds(const matched_design& design, const panel_dataset& d,
                                  const std::string& outcome, horizon h,
                                  const std::vector<std::string>& covariates);

std::string tree_to_json(const discovery_result& result);  // "tree/v1"

}  // namespace riskdid
