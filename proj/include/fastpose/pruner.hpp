#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fastpose/tensornet.hpp"

namespace fastpose {

enum class PruneTarget { kHead, kPnp, kBoth };

struct PruneConfig {
  PruneTarget target = PruneTarget::kBoth;
  int d_head = 0;
  int d_pnp = 0;
  int granularity_head = 8;
  int granularity_pnp = 4;
  bool include_bias = false;  // add |bias| to the filter score
};

// Removed output channels per pruned conv (ascending), plus the input
// channels each downstream consumer loses as a consequence.
struct PrunePlan {
  std::map<std::string, std::vector<int>> removed_filters;
  std::map<std::string, std::vector<int>> consumer_removed_inputs;

  bool empty() const { return removed_filters.empty(); }
  friend bool operator==(const PrunePlan&, const PrunePlan&) = default;
};

struct FilterNorm {
  int index = 0;
  double l1 = 0.0;
  friend bool operator==(const FilterNorm&, const FilterNorm&) = default;
};

// L1 norm of each filter's in×k×k weights, ascending; ties by lower index.
std::vector<FilterNorm> rank_filters_l1(const Layer& conv, bool include_bias = false);

// Convs eligible for output pruning: Conv2D layers of `module` whose output
// feeds a GroupNorm. The final head 1×1 conv and all Dense layers never are.
std::vector<int> prunable_convs(const LayerGraph& graph, const std::string& module);

// Scores each run of g consecutive filters by the sum of member L1 norms and
// removes the D lowest-scoring groups (ties: lower group index).
// Throws TooAggressive, InvalidConfig.
PrunePlan plan_prune(const LayerGraph& graph, const PruneConfig& config);

// Fills consumer_removed_inputs for the plan's removed_filters.
// Throws InconsistentPlan.
void derive_consumer_removals(const LayerGraph& graph, PrunePlan& plan);

// Returns a new graph with the planned filters removed and the removal
// propagated through GroupNorm, ReLU, Upsample, Flatten/Dense and Concat
// consumers. Throws InconsistentPlan.
LayerGraph apply_prune(const LayerGraph& graph, const PrunePlan& plan);

std::string prune_plan_to_json(const PrunePlan& plan);
PrunePlan prune_plan_from_json(const std::string& text);

}  // namespace fastpose
