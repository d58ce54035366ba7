#include "support/fixtures.hpp"

#include <cmath>
#include <numbers>

namespace fixtures {

using fastpose::Mat3;
using fastpose::Pose;
using fastpose::Vec3;

Mat3 rz(double deg) { return fastpose::rotation_about_axis(Vec3::UnitZ(), deg * std::numbers::pi / 180.0); }

fastpose::ObjectModel unit_cube(double side) {
  const double h = side / 2.0;
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i) v.emplace_back(i & 1 ? h : -h, i & 2 ? h : -h, i & 4 ? h : -h);
  std::vector<fastpose::Triangle> t = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                                       {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return fastpose::ObjectModel(v, t);
}

fastpose::ObjectModel random_model(fastpose::Rng& rng, int vertices, int triangles, double radius) {
  std::vector<Vec3> v;
  for (int i = 0; i < vertices; ++i) {
    v.emplace_back(rng.uniform(-radius, radius), rng.uniform(-radius, radius), rng.uniform(-radius, radius));
  }
  std::vector<fastpose::Triangle> t;
  for (int i = 0; i < triangles && vertices >= 3; ++i) {
    int a = static_cast<int>(rng.below(vertices));
    int b = static_cast<int>(rng.below(vertices));
    int c = static_cast<int>(rng.below(vertices));
    while (b == a) b = static_cast<int>(rng.below(vertices));
    while (c == a || c == b) c = static_cast<int>(rng.below(vertices));
    t.push_back({a, b, c});
  }
  return fastpose::ObjectModel(v, t);
}

Pose random_pose(fastpose::Rng& rng, double xy, double z_lo, double z_hi) {
  return Pose(fastpose::random_rotation(rng), Vec3(rng.uniform(-xy, xy), rng.uniform(-xy, xy), rng.uniform(z_lo, z_hi)));
}

Pose perturb(fastpose::Rng& rng, const Pose& p, double angle, double shift) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  const Mat3 r = fastpose::rotation_about_axis(axis, rng.uniform(-angle, angle)) * p.rotation();
  const Vec3 t = p.translation() + Vec3(rng.uniform(-shift, shift), rng.uniform(-shift, shift), rng.uniform(-shift, shift));
  return Pose(r, t);
}

std::vector<Pose> random_symmetries(fastpose::Rng& rng, int count) {
  std::vector<Pose> out{Pose::identity()};
  for (int i = 1; i < count; ++i) out.emplace_back(rz(rng.uniform(10.0, 350.0)), Vec3::Zero());
  return out;
}

}  // namespace fixtures
