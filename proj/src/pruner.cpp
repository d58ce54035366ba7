#include "fastpose/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "fastpose/errors.hpp"

namespace fastpose {

std::vector<FilterNorm> rank_filters_l1(const Layer& conv, bool include_bias) {
  if (conv.kind != LayerKind::kConv2D) fail(ErrorCode::kInvalidConfig, "'" + conv.name + "' is not a Conv2D");
  const std::size_t per_filter = static_cast<std::size_t>(conv.in_channels) * conv.kernel * conv.kernel;
  std::vector<FilterNorm> out;
  out.reserve(conv.out_channels);
  for (int f = 0; f < conv.out_channels; ++f) {
    double s = 0.0;
    for (std::size_t j = 0; j < per_filter; ++j) s += std::abs(static_cast<double>(conv.weight[f * per_filter + j]));
    if (include_bias) s += std::abs(static_cast<double>(conv.bias[f]));
    out.push_back({f, s});
  }
  std::stable_sort(out.begin(), out.end(), [](const FilterNorm& a, const FilterNorm& b) { return a.l1 < b.l1; });
  return out;
}

namespace {

std::vector<std::vector<int>> consumers_of(const LayerGraph& g) {
  std::vector<std::vector<int>> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (const auto& in : g.layer(i).inputs) {
      if (in.layer >= 0) out[in.layer].push_back(static_cast<int>(i));
    }
  }
  return out;
}

}  // namespace

std::vector<int> prunable_convs(const LayerGraph& graph, const std::string& module) {
  const auto consumers = consumers_of(graph);
  std::vector<int> out;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto& l = graph.layer(i);
    if (l.kind != LayerKind::kConv2D || l.module != module) continue;
    if (static_cast<int>(i) == graph.output_index()) continue;
    const bool feeds_gn = std::any_of(consumers[i].begin(), consumers[i].end(), [&](int c) {
      return graph.layer(c).kind == LayerKind::kGroupNorm;
    });
    if (feeds_gn) out.push_back(static_cast<int>(i));
  }
  return out;
}

PrunePlan plan_prune(const LayerGraph& graph, const PruneConfig& config) {
  graph.validate();
  if (config.d_head < 0 || config.d_pnp < 0) fail(ErrorCode::kInvalidConfig, "pruning degree must be >= 0");
  if (config.granularity_head < 1 || config.granularity_pnp < 1) {
    fail(ErrorCode::kInvalidConfig, "granularity must be >= 1");
  }
  const auto consumers = consumers_of(graph);
  PrunePlan plan;
  auto plan_module = [&](const std::string& module, int degree, int g) {
    if (degree == 0) return;
    for (int idx : prunable_convs(graph, module)) {
      const Layer& conv = graph.layer(idx);
      const int width = conv.out_channels;
      if (width % g != 0) {
        fail(ErrorCode::kInvalidConfig, "'" + conv.name + "' has " + std::to_string(width) +
                                            " filters, not a multiple of granularity " + std::to_string(g));
      }
      for (int c : consumers[idx]) {
        const Layer& gn = graph.layer(c);
        if (gn.kind == LayerKind::kGroupNorm && g % gn.group_size != 0) {
          fail(ErrorCode::kInvalidConfig, "granularity " + std::to_string(g) + " would split groups of '" +
                                              gn.name + "'");
        }
      }
      if (width - g * degree < g) {
        fail(ErrorCode::kTooAggressive, "'" + conv.name + "': removing " + std::to_string(g * degree) + " of " +
                                            std::to_string(width) + " filters leaves fewer than " +
                                            std::to_string(g));
      }
      const auto norms = rank_filters_l1(conv, config.include_bias);
      std::vector<double> per_filter(width, 0.0);
      for (const auto& n : norms) per_filter[n.index] = n.l1;
      const int groups = width / g;
      std::vector<std::pair<double, int>> scores;
      for (int k = 0; k < groups; ++k) {
        double s = 0.0;
        for (int j = 0; j < g; ++j) s += per_filter[k * g + j];
        scores.emplace_back(s, k);
      }
      std::stable_sort(scores.begin(), scores.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      std::vector<int> removed;
      for (int d = 0; d < degree; ++d) {
        for (int j = 0; j < g; ++j) removed.push_back(scores[d].second * g + j);
      }
      std::sort(removed.begin(), removed.end());
      plan.removed_filters[conv.name] = std::move(removed);
    }
  };
  if (config.target == PruneTarget::kHead || config.target == PruneTarget::kBoth) {
    plan_module("head", config.d_head, config.granularity_head);
  }
  if (config.target == PruneTarget::kPnp || config.target == PruneTarget::kBoth) {
    plan_module("pnp", config.d_pnp, config.granularity_pnp);
  }
  derive_consumer_removals(graph, plan);
  return plan;
}

namespace {

// Result of pushing the planned removals through the graph.
struct Propagation {
  std::vector<std::vector<int>> removed_in;   // per layer, in its input index space
  std::vector<std::vector<int>> removed_out;  // per layer, in its output index space
  std::vector<std::vector<InputRef>> concat_inputs;  // re-indexed slices
};

[[noreturn]] void inconsistent(const std::string& why) { fail(ErrorCode::kInconsistentPlan, why); }

int count_below(const std::vector<int>& sorted, int bound) {
  return static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), bound) - sorted.begin());
}

Propagation propagate(const LayerGraph& graph, const PrunePlan& plan) {
  const auto shapes = graph.infer_shapes();
  for (const auto& [name, removed] : plan.removed_filters) {
    const int idx = graph.find(name);
    if (idx < 0) inconsistent("plan names unknown layer '" + name + "'");
    const Layer& l = graph.layer(idx);
    if (l.kind != LayerKind::kConv2D) inconsistent("'" + name + "' is not a Conv2D");
    if (idx == graph.output_index()) inconsistent("'" + name + "' is the graph output");
    for (std::size_t k = 0; k < removed.size(); ++k) {
      if (removed[k] < 0 || removed[k] >= l.out_channels) {
        inconsistent("'" + name + "' removal index " + std::to_string(removed[k]) + " out of range");
      }
      if (k > 0 && removed[k] <= removed[k - 1]) inconsistent("'" + name + "' removal indices not ascending/unique");
    }
    if (static_cast<int>(removed.size()) >= l.out_channels) inconsistent("'" + name + "' would lose every filter");
  }

  Propagation p;
  p.removed_in.resize(graph.size());
  p.removed_out.resize(graph.size());
  p.concat_inputs.resize(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const Layer& l = graph.layer(i);
    const int src = l.inputs[0].layer;
    const std::vector<int> none;
    const std::vector<int>& in_removed = src >= 0 ? p.removed_out[src] : none;
    switch (l.kind) {
      case LayerKind::kConv2D: {
        p.removed_in[i] = in_removed;
        if (auto it = plan.removed_filters.find(l.name); it != plan.removed_filters.end()) {
          p.removed_out[i] = it->second;
        }
        break;
      }
      case LayerKind::kGroupNorm: {
        p.removed_in[i] = in_removed;
        p.removed_out[i] = in_removed;
        std::set<int> touched;
        for (int c : in_removed) touched.insert(c / l.group_size);
        for (int gidx : touched) {
          for (int j = 0; j < l.group_size; ++j) {
            if (!std::binary_search(in_removed.begin(), in_removed.end(), gidx * l.group_size + j)) {
              inconsistent("removal splits group " + std::to_string(gidx) + " of '" + l.name + "'");
            }
          }
        }
        break;
      }
      case LayerKind::kReLU:
      case LayerKind::kUpsample2x:
        p.removed_in[i] = in_removed;
        p.removed_out[i] = in_removed;
        break;
      case LayerKind::kFlatten: {
        const Shape& s = src >= 0 ? shapes[src] : graph.input_shape();
        const int hw = s.h * s.w;
        p.removed_in[i] = in_removed;
        for (int c : in_removed) {
          for (int j = 0; j < hw; ++j) p.removed_out[i].push_back(c * hw + j);
        }
        break;
      }
      case LayerKind::kDense:
        p.removed_in[i] = in_removed;
        break;
      case LayerKind::kConcat: {
        int offset = 0;
        for (const auto& ref : l.inputs) {
          const Shape& s = ref.layer >= 0 ? shapes[ref.layer] : graph.input_shape();
          const int end = ref.end < 0 ? s.c : ref.end;
          const std::vector<int>& r = ref.layer >= 0 ? p.removed_out[ref.layer] : none;
          InputRef moved = ref;
          moved.begin = ref.begin - count_below(r, ref.begin);
          moved.end = ref.end < 0 ? -1 : end - count_below(r, end);
          for (int c : r) {
            if (c >= ref.begin && c < end) p.removed_out[i].push_back(offset + c - ref.begin);
          }
          const int kept = (end - count_below(r, end)) - moved.begin;
          // A slice whose channels are all removed drops out of the concat.
          if (kept > 0) p.concat_inputs[i].push_back(moved);
          offset += end - ref.begin;
        }
        if (p.concat_inputs[i].empty()) inconsistent("every slice of '" + l.name + "' would become empty");
        p.removed_in[i] = p.removed_out[i];
        break;
      }
    }
  }
  if (!graph.empty() && !p.removed_out.back().empty()) inconsistent("plan changes the graph output width");
  return p;
}

template <typename V>
std::vector<V> erase_indices(const std::vector<V>& v, const std::vector<int>& removed) {
  std::vector<V> out;
  out.reserve(v.size() - removed.size());
  std::size_t r = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (r < removed.size() && removed[r] == static_cast<int>(i)) {
      ++r;
      continue;
    }
    out.push_back(v[i]);
  }
  return out;
}

}  // namespace

void derive_consumer_removals(const LayerGraph& graph, PrunePlan& plan) {
  const Propagation p = propagate(graph, plan);
  plan.consumer_removed_inputs.clear();
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (!p.removed_in[i].empty()) plan.consumer_removed_inputs[graph.layer(i).name] = p.removed_in[i];
  }
}

LayerGraph apply_prune(const LayerGraph& graph, const PrunePlan& plan) {
  graph.validate();
  const Propagation p = propagate(graph, plan);
  LayerGraph out(graph.input_shape());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    Layer l = graph.layer(i);
    const auto& rin = p.removed_in[i];
    switch (l.kind) {
      case LayerKind::kConv2D: {
        const int kk = l.kernel * l.kernel;
        const auto filt_it = plan.removed_filters.find(l.name);
        const std::vector<int> none;
        const std::vector<int>& rout = filt_it != plan.removed_filters.end() ? filt_it->second : none;
        const int new_in = l.in_channels - static_cast<int>(rin.size());
        const int new_out = l.out_channels - static_cast<int>(rout.size());
        std::vector<float> w;
        w.reserve(static_cast<std::size_t>(new_out) * new_in * kk);
        std::size_t ro = 0;
        for (int o = 0; o < l.out_channels; ++o) {
          if (ro < rout.size() && rout[ro] == o) {
            ++ro;
            continue;
          }
          std::size_t ri = 0;
          for (int c = 0; c < l.in_channels; ++c) {
            if (ri < rin.size() && rin[ri] == c) {
              ++ri;
              continue;
            }
            const float* src = l.weight.data() + (static_cast<std::size_t>(o) * l.in_channels + c) * kk;
            w.insert(w.end(), src, src + kk);
          }
        }
        l.weight = std::move(w);
        l.bias = erase_indices(l.bias, rout);
        l.in_channels = new_in;
        l.out_channels = new_out;
        break;
      }
      case LayerKind::kGroupNorm:
        l.weight = erase_indices(l.weight, rin);
        l.bias = erase_indices(l.bias, rin);
        l.in_channels = l.out_channels = l.in_channels - static_cast<int>(rin.size());
        break;
      case LayerKind::kDense: {
        const int new_in = l.in_channels - static_cast<int>(rin.size());
        std::vector<float> w;
        w.reserve(static_cast<std::size_t>(l.out_channels) * new_in);
        for (int o = 0; o < l.out_channels; ++o) {
          std::size_t ri = 0;
          for (int c = 0; c < l.in_channels; ++c) {
            if (ri < rin.size() && rin[ri] == c) {
              ++ri;
              continue;
            }
            w.push_back(l.weight[static_cast<std::size_t>(o) * l.in_channels + c]);
          }
        }
        l.weight = std::move(w);
        l.in_channels = new_in;
        break;
      }
      case LayerKind::kConcat:
        l.inputs = p.concat_inputs[i];
        break;
      case LayerKind::kReLU:
      case LayerKind::kUpsample2x:
      case LayerKind::kFlatten:
        break;
    }
    out.add(std::move(l));
  }
  out.validate();
  return out;
}

std::string prune_plan_to_json(const PrunePlan& plan) {
  nlohmann::json j;
  j["removed_filters"] = plan.removed_filters;
  j["consumer_removed_inputs"] = plan.consumer_removed_inputs;
  return j.dump(2) + "\n";
}

PrunePlan prune_plan_from_json(const std::string& text) {
  PrunePlan plan;
  try {
    const auto j = nlohmann::json::parse(text);
    plan.removed_filters = j.at("removed_filters").get<std::map<std::string, std::vector<int>>>();
    if (j.contains("consumer_removed_inputs")) {
      plan.consumer_removed_inputs =
          j.at("consumer_removed_inputs").get<std::map<std::string, std::vector<int>>>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchemaViolation, std::string("prune plan: ") + e.what());
  }
  return plan;
}

}  // namespace fastpose
