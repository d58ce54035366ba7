#include "fastpose/toy_gdrn.hpp"

#include <cmath>
#include <string>

#include "fastpose/errors.hpp"

namespace fastpose {

void ToyGdrnConfig::validate() const {
  auto bad = [](const std::string& why) { fail(ErrorCode::kInvalidConfig, why); };
  if (backbone_width < kBackboneGroupSize || backbone_width % kBackboneGroupSize != 0) {
    bad("backbone_width must be a positive multiple of " + std::to_string(kBackboneGroupSize));
  }
  if (head_width % kHeadGranularity != 0) bad("head_width must be a multiple of 8");
  if (pnp_width % kPnpGranularity != 0) bad("pnp_width must be a multiple of 4");
  if (d_head < 0 || d_pnp < 0) bad("pruning degrees must be >= 0");
  if (head_channels() < kHeadGranularity) {
    bad("head_width - 8*D_head = " + std::to_string(head_channels()) + " is below 8");
  }
  if (pnp_channels() < kPnpGranularity) {
    bad("pnp_width - 4*D_pnp = " + std::to_string(pnp_channels()) + " is below 4");
  }
  if (regions < 1) bad("regions must be >= 1");
  if (input_size < 8 || input_size % 8 != 0) bad("input_size must be a positive multiple of 8");
}

namespace {

constexpr int kStemWidth1 = 16;
constexpr int kStemWidth2 = 32;

int conv_block(LayerGraph& g, const std::string& module, int index, InputRef input, int in_c, int out_c,
               int stride, int group_size) {
  const std::string n = std::to_string(index);
  const int conv = g.add_conv(module + ".conv" + n, module, input, in_c, out_c, 3, stride, 1);
  const int gn = g.add_group_norm(module + ".gn" + n, module, {conv}, out_c, group_size);
  return g.add_relu(module + ".relu" + n, module, {gn});
}

// Appends the head to `g`, reading features from `features`; returns the
// index of the final 1×1 conv.
int append_head(LayerGraph& g, InputRef features, const ToyGdrnConfig& c) {
  const int width = c.head_channels();
  int in_c = c.backbone_width;
  InputRef x = features;
  for (int b = 1; b <= 3; ++b) {
    const int up = g.add_upsample("head.up" + std::to_string(b), "head", x);
    x = {conv_block(g, "head", b, {up}, in_c, width, 1, kHeadGranularity)};
    in_c = width;
  }
  HeadLayout layout{c.regions};
  return g.add_conv("head.out", "head", x, width, layout.total_channels(), 1, 1, 0);
}

void append_backbone(LayerGraph& g, int width) {
  InputRef x{InputRef::kGraphInput};
  x = {conv_block(g, "backbone", 1, x, 3, kStemWidth1, 2, kBackboneGroupSize)};
  x = {conv_block(g, "backbone", 2, x, kStemWidth1, kStemWidth2, 2, kBackboneGroupSize)};
  conv_block(g, "backbone", 3, x, kStemWidth2, width, 2, kBackboneGroupSize);
}

}  // namespace

LayerGraph build_backbone_stub(int width, int input_size, std::uint64_t seed) {
  if (width < kBackboneGroupSize || width % kBackboneGroupSize != 0) {
    fail(ErrorCode::kInvalidConfig, "backbone width must be a positive multiple of 4");
  }
  if (input_size < 8 || input_size % 8 != 0) {
    fail(ErrorCode::kInvalidConfig, "input_size must be a positive multiple of 8");
  }
  LayerGraph g(Shape{3, input_size, input_size});
  append_backbone(g, width);
  init_weights(g, Rng(seed));
  g.validate();
  return g;
}

LayerGraph build_toy_head(const ToyGdrnConfig& config) {
  config.validate();
  const int f = config.feature_size();
  LayerGraph g(Shape{config.backbone_width, f, f});
  append_head(g, {InputRef::kGraphInput}, config);
  init_weights(g, Rng(config.seed));
  g.validate();
  return g;
}

LayerGraph build_toy_gdrn(const ToyGdrnConfig& config) {
  config.validate();
  LayerGraph g(Shape{3, config.input_size, config.input_size});
  append_backbone(g, config.backbone_width);
  const int head_out = append_head(g, {g.output_index()}, config);

  const HeadLayout layout{config.regions};
  const int concat = g.add_concat(
      "pnp.concat", "pnp",
      {InputRef{head_out, layout.sra_begin(), layout.sra_begin() + layout.sra_channels()},
       InputRef{head_out, layout.xyz_begin(), layout.xyz_begin() + layout.xyz_channels()}});
  const int width = config.pnp_channels();
  InputRef x{concat};
  int in_c = layout.pnp_input_channels();
  for (int b = 1; b <= 3; ++b) {
    x = {conv_block(g, "pnp", b, x, in_c, width, 2, kPnpGranularity)};
    in_c = width;
  }
  const int flat = g.add_flatten("pnp.flatten", "pnp", x);
  const int pooled = config.feature_size();
  const int fc1 = g.add_dense("pnp.fc1", "pnp", {flat}, width * pooled * pooled, kPnpHiddenFeatures);
  const int act = g.add_relu("pnp.relu_fc", "pnp", {fc1});
  g.add_dense("pnp.out", "pnp", {act}, kPnpHiddenFeatures, kPoseOutputs);

  init_weights(g, Rng(config.seed));
  g.validate();
  return g;
}

template <typename T>
void init_weights(BasicLayerGraph<T>& graph, const Rng& rng) {
  for (auto& l : graph.mutable_layers()) {
    if (l.kind == LayerKind::kGroupNorm) {
      std::fill(l.weight.begin(), l.weight.end(), T(1));
      std::fill(l.bias.begin(), l.bias.end(), T(0));
      continue;
    }
    if (l.kind != LayerKind::kConv2D && l.kind != LayerKind::kDense) continue;
    const int fan_in = l.kind == LayerKind::kConv2D ? l.in_channels * l.kernel * l.kernel : l.in_channels;
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
    Rng r = rng.split(l.name);
    for (auto& w : l.weight) w = static_cast<T>(r.uniform(-bound, bound));
    for (auto& b : l.bias) b = static_cast<T>(r.uniform(-bound, bound));
  }
}

template void init_weights(BasicLayerGraph<float>&, const Rng&);
template void init_weights(BasicLayerGraph<double>&, const Rng&);

}  // namespace fastpose
