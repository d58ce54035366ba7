#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fastpose/geomcore.hpp"

namespace fastpose {

// Per-pixel camera-space depth (mm, 0 = background) and the matching
// visibility mask. Row-major, pixel (u, v) at index v * width + u.
class DistanceMap {
 public:
  DistanceMap(int width, int height)
      : width_(width),
        height_(height),
        depth_(static_cast<std::size_t>(width) * height, 0.0),
        visible_(static_cast<std::size_t>(width) * height, 0) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return depth_.size(); }

  double depth(int u, int v) const { return depth_[index(u, v)]; }
  bool visible(int u, int v) const { return visible_[index(u, v)] != 0; }

  const std::vector<double>& depth() const noexcept { return depth_; }
  const std::vector<std::uint8_t>& visible() const noexcept { return visible_; }

  std::size_t visible_count() const;

  // Keeps the smaller positive depth; marks the pixel visible.
  void write_nearest(int u, int v, double z) {
    auto i = index(u, v);
    if (visible_[i] == 0 || z < depth_[i]) {
      depth_[i] = z;
      visible_[i] = 1;
    }
  }

  friend bool operator==(const DistanceMap&, const DistanceMap&) = default;

 private:
  std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width_ + u; }

  int width_;
  int height_;
  std::vector<double> depth_;
  std::vector<std::uint8_t> visible_;
};

// Near clipping plane in camera space.
inline constexpr double kNearPlaneMm = 1.0;

// Z-buffer rasterization of the posed mesh. A pixel is covered when its
// center (integer image coordinates) lies inside the projected triangle, with
// the top-left rule on edges. Depth is interpolated perspective-correctly.
DistanceMap render_distance_map(const ObjectModel& model, const Pose& pose,
                                const CameraIntrinsics& k);

// ASCII PGM (P2, maxval 65535), depth rounded to whole millimeters.
std::string distance_map_to_pgm(const DistanceMap& map);

}  // namespace fastpose
