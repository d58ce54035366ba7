#include "support/prune_fixtures.hpp"

#include "fastpose/errors.hpp"
#include "oracles/oracles.hpp"

namespace fixtures {

using fastpose::LayerKind;

void zero_pruned_paths(fastpose::LayerGraph& g, const fastpose::PrunePlan& plan) {
  for (const auto& [name, removed] : plan.removed_filters) {
    auto& l = g.mutable_layer(g.find(name));
    const std::size_t per = static_cast<std::size_t>(l.in_channels) * l.kernel * l.kernel;
    for (int f : removed) {
      for (std::size_t j = 0; j < per; ++j) l.weight[f * per + j] = 0.0f;
      l.bias[f] = 0.0f;
    }
  }
  for (const auto& [name, removed] : plan.consumer_removed_inputs) {
    auto& l = g.mutable_layer(g.find(name));
    switch (l.kind) {
      case LayerKind::kGroupNorm:
        for (int c : removed) l.weight[c] = l.bias[c] = 0.0f;
        break;
      case LayerKind::kConv2D: {
        const std::size_t k2 = static_cast<std::size_t>(l.kernel) * l.kernel;
        for (int o = 0; o < l.out_channels; ++o) {
          for (int c : removed) {
            for (std::size_t j = 0; j < k2; ++j) l.weight[(o * static_cast<std::size_t>(l.in_channels) + c) * k2 + j] = 0.0f;
          }
        }
        break;
      }
      case LayerKind::kDense:
        for (int o = 0; o < l.out_channels; ++o) {
          for (int c : removed) l.weight[o * static_cast<std::size_t>(l.in_channels) + c] = 0.0f;
        }
        break;
      default:
        break;
    }
  }
}

PruneCase random_prune_case(fastpose::Rng& rng) {
  PruneCase pc;
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); };
  const int head_groups = pick(2, 6);
  const int pnp_groups = pick(2, 6);
  pc.model.backbone_width = 4 * pick(1, 2);
  pc.model.head_width = fastpose::kHeadGranularity * head_groups;
  pc.model.pnp_width = fastpose::kPnpGranularity * pnp_groups;
  pc.model.regions = pick(1, 6);
  pc.model.input_size = 8 * pick(1, 2);
  pc.model.seed = rng.below(1u << 30);
  pc.prune.target = static_cast<fastpose::PruneTarget>(pick(0, 2));
  pc.prune.d_head = pick(0, head_groups - 1);
  pc.prune.d_pnp = pick(0, pnp_groups - 1);
  pc.prune.include_bias = rng.below(2) == 1;
  pc.prune.granularity_head = fastpose::kHeadGranularity;
  pc.prune.granularity_pnp = fastpose::kPnpGranularity;
  return pc;
}

std::string prune_soundness(const fastpose::LayerGraph& original, const fastpose::PrunePlan& plan,
                            const fastpose::LayerGraph& pruned) {
  try {
    pruned.validate();
  } catch (const fastpose::Error& e) {
    return std::string("invariants: ") + e.what();
  }
  if (pruned.size() != original.size()) return "layer count changed";
  for (const auto& [name, removed] : plan.removed_filters) {
    const auto& before = original.layer(original.find(name));
    const auto& after = pruned.layer(pruned.find(name));
    if (after.out_channels + static_cast<int>(removed.size()) != before.out_channels) {
      return name + ": expected " + std::to_string(before.out_channels - static_cast<int>(removed.size())) +
             " filters, got " + std::to_string(after.out_channels);
    }
  }
  const auto naive = oracle::naive_flops(pruned);
  const auto flops = fastpose::count_flops(pruned);
  if (flops.total_macs != naive.macs) return "MAC count disagrees with the naive counter";
  if (flops.total_elementwise != naive.elementwise) return "elementwise count disagrees with the naive counter";
  if (fastpose::count_params(pruned) != oracle::naive_params(pruned)) return "parameter count disagrees";
  return {};
}

}  // namespace fixtures
