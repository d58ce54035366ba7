#include "fastpose/rasterizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace fastpose {

std::size_t DistanceMap::visible_count() const {
  return static_cast<std::size_t>(std::count(visible_.begin(), visible_.end(), std::uint8_t{1}));
}

namespace {

struct ScreenVertex {
  double x, y;   // pixel coordinates
  double inv_z;  // 1 / camera-space depth
};

// Sutherland-Hodgman against z >= near. Returns 0, 3 or 4 vertices.
int clip_near(const std::array<Vec3, 3>& in, std::array<Vec3, 4>& out) {
  int n = 0;
  for (int i = 0; i < 3; ++i) {
    const Vec3& a = in[i];
    const Vec3& b = in[(i + 1) % 3];
    const bool a_in = a.z() >= kNearPlaneMm;
    const bool b_in = b.z() >= kNearPlaneMm;
    if (a_in) out[n++] = a;
    if (a_in != b_in) {
      const double s = (kNearPlaneMm - a.z()) / (b.z() - a.z());
      Vec3 p = a + s * (b - a);
      p.z() = kNearPlaneMm;
      out[n++] = p;
    }
  }
  return n;
}

double edge(const ScreenVertex& a, const ScreenVertex& b, double px, double py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

// With the interior on the positive side, an edge owns its boundary pixels
// when it is a left edge (dy < 0) or a top edge (dy == 0, dx > 0).
bool owns_boundary(const ScreenVertex& a, const ScreenVertex& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  return dy < 0.0 || (dy == 0.0 && dx > 0.0);
}

bool inside(double e, bool top_left) { return e > 0.0 || (e == 0.0 && top_left); }

void raster_triangle(ScreenVertex v0, ScreenVertex v1, ScreenVertex v2, DistanceMap& map) {
  double area = edge(v0, v1, v2.x, v2.y);
  if (!(std::abs(area) > 0.0) || !std::isfinite(area)) return;
  if (area < 0.0) {
    std::swap(v1, v2);
    area = -area;
  }
  const double min_x = std::min({v0.x, v1.x, v2.x});
  const double max_x = std::max({v0.x, v1.x, v2.x});
  const double min_y = std::min({v0.y, v1.y, v2.y});
  const double max_y = std::max({v0.y, v1.y, v2.y});
  const int u0 = std::max(0, static_cast<int>(std::ceil(std::max(min_x, -1.0))));
  const int u1 = std::min(map.width() - 1, static_cast<int>(std::floor(std::min(max_x, 1e9))));
  const int w0 = std::max(0, static_cast<int>(std::ceil(std::max(min_y, -1.0))));
  const int w1 = std::min(map.height() - 1, static_cast<int>(std::floor(std::min(max_y, 1e9))));
  if (u0 > u1 || w0 > w1) return;

  const bool tl12 = owns_boundary(v1, v2);
  const bool tl20 = owns_boundary(v2, v0);
  const bool tl01 = owns_boundary(v0, v1);
  for (int v = w0; v <= w1; ++v) {
    const double py = v;
    for (int u = u0; u <= u1; ++u) {
      const double px = u;
      const double e0 = edge(v1, v2, px, py);
      const double e1 = edge(v2, v0, px, py);
      const double e2 = edge(v0, v1, px, py);
      if (!inside(e0, tl12) || !inside(e1, tl20) || !inside(e2, tl01)) continue;
      const double inv_z = (e0 * v0.inv_z + e1 * v1.inv_z + e2 * v2.inv_z) / area;
      if (!(inv_z > 0.0)) continue;
      map.write_nearest(u, v, 1.0 / inv_z);
    }
  }
}

}  // namespace

DistanceMap render_distance_map(const ObjectModel& model, const Pose& pose,
                                const CameraIntrinsics& k) {
  DistanceMap map(k.width(), k.height());
  std::vector<Vec3> cam;
  cam.reserve(model.vertices().size());
  for (const auto& x : model.vertices()) cam.push_back(transform_point(pose, x));

  auto to_screen = [&k](const Vec3& p) {
    return ScreenVertex{k.fx() * p.x() / p.z() + k.cx(), k.fy() * p.y() / p.z() + k.cy(),
                        1.0 / p.z()};
  };

  std::array<Vec3, 4> poly;
  for (const auto& tri : model.triangles()) {
    const std::array<Vec3, 3> corners{cam[tri[0]], cam[tri[1]], cam[tri[2]]};
    if (corners[0].z() < kNearPlaneMm && corners[1].z() < kNearPlaneMm &&
        corners[2].z() < kNearPlaneMm) {
      continue;
    }
    const int n = clip_near(corners, poly);
    if (n < 3) continue;
    const ScreenVertex s0 = to_screen(poly[0]);
    for (int i = 1; i + 1 < n; ++i) {
      raster_triangle(s0, to_screen(poly[i]), to_screen(poly[i + 1]), map);
    }
  }
  return map;
}

std::string distance_map_to_pgm(const DistanceMap& map) {
  std::ostringstream os;
  os << "P2\n" << map.width() << ' ' << map.height() << "\n65535\n";
  for (int v = 0; v < map.height(); ++v) {
    for (int u = 0; u < map.width(); ++u) {
      const double mm = std::clamp(std::round(map.depth(u, v)), 0.0, 65535.0);
      os << static_cast<int>(mm) << (u + 1 < map.width() ? ' ' : '\n');
    }
  }
  return os.str();
}

}  // namespace fastpose
