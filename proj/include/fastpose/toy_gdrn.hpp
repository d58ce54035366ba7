#pragma once

#include <cstdint>

#include "fastpose/rng.hpp"
#include "fastpose/tensornet.hpp"

namespace fastpose {

// Channel layout of the geometric head output: M_SRA (regions + background),
// M_vis, M_amo, M_2D-3D (xyz).
struct HeadLayout {
  int regions = 64;

  int sra_begin() const { return 0; }
  int sra_channels() const { return regions + 1; }
  int vis_channel() const { return regions + 1; }
  int amo_channel() const { return regions + 2; }
  int xyz_begin() const { return regions + 3; }
  int xyz_channels() const { return 3; }
  int total_channels() const { return regions + 6; }
  // Patch-PnP consumes M_SRA and M_2D-3D.
  int pnp_input_channels() const { return sra_channels() + xyz_channels(); }
};

inline constexpr int kHeadGranularity = 8;
inline constexpr int kPnpGranularity = 4;
inline constexpr int kBackboneGroupSize = 4;
inline constexpr int kPnpHiddenFeatures = 256;
inline constexpr int kPoseOutputs = 9;  // 6D rotation + translation

struct ToyGdrnConfig {
  int backbone_width = 64;
  int head_width = 256;
  int pnp_width = 128;
  int regions = 64;
  int d_head = 0;
  int d_pnp = 0;
  // Side of the square input crop; must be a multiple of 8. The backbone
  // reduces it by 8 and the head upsamples back to it.
  int input_size = 64;
  std::uint64_t seed = 0;

  int head_channels() const { return head_width - kHeadGranularity * d_head; }
  int pnp_channels() const { return pnp_width - kPnpGranularity * d_pnp; }
  int feature_size() const { return input_size / 8; }

  // Throws InvalidConfig.
  void validate() const;
};

// 3×S×S → backbone_width×S/8×S/8: three stride-2 Conv3×3 + GroupNorm(4) + ReLU.
LayerGraph build_backbone_stub(int width, int input_size, std::uint64_t seed);

// backbone features → (R+6)×S×S: three Upsample + Conv3×3 + GroupNorm(8) +
// ReLU blocks and a final 1×1 conv ("head.out").
LayerGraph build_toy_head(const ToyGdrnConfig& config);

// Backbone stub + geometric head + Patch-PnP (concat of the M_SRA and
// M_2D-3D slices, three stride-2 Conv3×3 + GroupNorm(4) + ReLU blocks,
// Flatten, Dense 256, ReLU, Dense 9). Throws InvalidConfig.
LayerGraph build_toy_gdrn(const ToyGdrnConfig& config);

// Uniform in ±1/sqrt(fan_in) for conv/dense weights and biases; GroupNorm
// γ = 1, β = 0. Each layer draws from rng.split(layer name).
template <typename T>
void init_weights(BasicLayerGraph<T>& graph, const Rng& rng);

}  // namespace fastpose
