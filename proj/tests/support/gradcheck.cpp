#include "support/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oracles/oracles.hpp"

namespace fixtures {

using fastpose::LayerKind;

void randomize_params(DGraph& g, fastpose::Rng& rng) {
  for (auto& l : g.mutable_layers()) {
    for (double& w : l.weight) w = rng.uniform(-1.0, 1.0);
    for (double& b : l.bias) b = rng.uniform(-1.0, 1.0);
  }
}

DTensor random_tensor(const fastpose::Shape& s, fastpose::Rng& rng, double lo, double hi) {
  DTensor t(s);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

namespace {

// Sign pattern of every ReLU input, used to detect kink crossings.
std::vector<bool> relu_pattern(const DGraph& g, const fastpose::ForwardTrace<double>& tr) {
  std::vector<bool> out;
  for (const auto& l : g.layers()) {
    if (l.kind != LayerKind::kReLU) continue;
    const int src = l.inputs[0].layer;
    const auto& x = src < 0 ? tr.input : tr.activations[src];
    for (double v : x.data) out.push_back(v > 0.0);
  }
  return out;
}

}  // namespace

double relu_margin(const DGraph& g, const DTensor& input) {
  const auto tr = fastpose::forward_trace(g, input);
  double m = std::numeric_limits<double>::infinity();
  for (const auto& l : g.layers()) {
    if (l.kind != LayerKind::kReLU) continue;
    const int src = l.inputs[0].layer;
    const auto& x = src < 0 ? tr.input : tr.activations[src];
    for (double v : x.data) m = std::min(m, std::abs(v));
  }
  return m;
}

DTensor kink_free_input(const DGraph& g, fastpose::Rng& rng, double margin) {
  DTensor x = random_tensor(g.input_shape(), rng);
  for (int attempt = 0; attempt < 100 && relu_margin(g, x) < margin; ++attempt) {
    x = random_tensor(g.input_shape(), rng);
  }
  return x;
}

GradCheckStats check_gradients(const DGraph& g0, const DTensor& input0, fastpose::Rng& rng, double h) {
  DGraph g = g0;
  DTensor input = input0;
  const auto base = fastpose::forward_trace(g, input);
  const auto base_pattern = relu_pattern(g, base);
  DTensor c(base.output().shape);
  for (double& v : c.data) v = rng.uniform(-1.0, 1.0);
  const auto grads = fastpose::backward(g, base, c);

  bool kink = false;
  auto loss = [&]() {
    const auto tr = fastpose::forward_trace(g, input);
    if (relu_pattern(g, tr) != base_pattern) kink = true;
    double s = 0.0;
    for (std::size_t i = 0; i < c.data.size(); ++i) s += c.data[i] * tr.output().data[i];
    return s;
  };

  GradCheckStats st;
  auto check_one = [&](double& x, double analytic, const std::string& where) {
    kink = false;
    const double numeric = oracle::central_difference(loss, x, h);
    if (kink) {
      ++st.skipped;
      return;
    }
    ++st.checked;
    const double denom = std::max(std::abs(analytic), std::abs(numeric));
    if (denom > 0) st.worst_rel = std::max(st.worst_rel, std::abs(analytic - numeric) / denom);
    if (!oracle::grad_close(analytic, numeric)) {
      if (st.failed++ == 0) {
        st.first_failure = where + ": analytic " + std::to_string(analytic) + " numeric " + std::to_string(numeric);
      }
    }
  };

  for (std::size_t li = 0; li < g.size(); ++li) {
    auto& l = g.mutable_layer(li);
    for (std::size_t k = 0; k < l.weight.size(); ++k) {
      check_one(l.weight[k], grads.layers[li].weight[k], l.name + ".weight[" + std::to_string(k) + "]");
    }
    for (std::size_t k = 0; k < l.bias.size(); ++k) {
      check_one(l.bias[k], grads.layers[li].bias[k], l.name + ".bias[" + std::to_string(k) + "]");
    }
  }
  for (std::size_t k = 0; k < input.data.size(); ++k) {
    check_one(input.data[k], grads.input.data[k], "input[" + std::to_string(k) + "]");
  }
  return st;
}

}  // namespace fixtures

#include "fastpose/toy_gdrn.hpp"

namespace fixtures {

DGraph gradcheck_graph(LayerKind kind, fastpose::Rng& rng) {
  using fastpose::InputRef;
  using fastpose::Shape;
  DGraph g;
  switch (kind) {
    case LayerKind::kConv2D: {
      g = DGraph(Shape{3, 5, 5});
      const int a = g.add_conv("conv_s2", "m", InputRef{}, 3, 4, 3, 2, 1);
      g.add_conv("conv_1x1", "m", InputRef{a}, 4, 2, 1, 1, 0);
      break;
    }
    case LayerKind::kGroupNorm: {
      g = DGraph(Shape{2, 3, 3});
      const int a = g.add_conv("conv", "m", InputRef{}, 2, 4, 3, 1, 1);
      g.add_group_norm("gn", "m", InputRef{a}, 4, 2);
      break;
    }
    case LayerKind::kReLU: {
      g = DGraph(Shape{2, 3, 3});
      const int a = g.add_conv("conv", "m", InputRef{}, 2, 3, 3, 1, 1);
      g.add_relu("relu", "m", InputRef{a});
      break;
    }
    case LayerKind::kUpsample2x: {
      g = DGraph(Shape{2, 2, 3});
      const int a = g.add_upsample("up", "m", InputRef{});
      g.add_conv("conv", "m", InputRef{a}, 2, 2, 3, 1, 1);
      break;
    }
    case LayerKind::kDense: {
      g = DGraph(Shape{5});
      const int a = g.add_dense("fc1", "m", InputRef{}, 5, 4);
      g.add_dense("fc2", "m", InputRef{a}, 4, 3);
      break;
    }
    case LayerKind::kFlatten: {
      g = DGraph(Shape{2, 3, 3});
      const int a = g.add_conv("conv", "m", InputRef{}, 2, 3, 3, 2, 1);
      const int f = g.add_flatten("flatten", "m", InputRef{a});
      g.add_dense("fc", "m", InputRef{f}, 12, 4);
      break;
    }
    case LayerKind::kConcat: {
      g = DGraph(Shape{3, 3, 3});
      const int a = g.add_conv("conv_a", "m", InputRef{}, 3, 4, 1, 1, 0);
      const int c = g.add_concat("cat", "m", {InputRef{a, 1, 3}, InputRef{InputRef::kGraphInput, 0, 2}, InputRef{a, 3, 4}});
      g.add_conv("conv_b", "m", InputRef{c}, 5, 2, 3, 1, 1);
      break;
    }
  }
  randomize_params(g, rng);
  return g;
}

DGraph tiny_gdrn_double(std::uint64_t seed) {
  fastpose::ToyGdrnConfig c;
  c.backbone_width = 8;
  c.head_width = 16;
  c.pnp_width = 8;
  c.regions = 4;
  c.input_size = 8;
  c.seed = seed;
  return fastpose::graph_cast<double>(fastpose::build_toy_gdrn(c));
}

}  // namespace fixtures
