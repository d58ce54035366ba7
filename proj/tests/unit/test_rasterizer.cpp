#include <doctest.h>

#include <cmath>

#include "fastpose/rasterizer.hpp"
#include "oracles/oracles.hpp"
#include "support/fixtures.hpp"

using namespace fastpose;

namespace {

const CameraIntrinsics kCam32(40.0, 40.0, 15.5, 15.5, 32, 32);

ObjectModel flat_triangle(double z, double half) {
  return ObjectModel({Vec3(-half, -half, z), Vec3(half, -half, z), Vec3(0, half, z)}, {{0, 1, 2}});
}

void check_against_oracle(const ObjectModel& m, const Pose& p, const CameraIntrinsics& k) {
  const DistanceMap map = render_distance_map(m, p, k);
  const auto ref = oracle::raycast_depth(m, p, k);
  int mask_mismatch = 0;
  double worst = 0.0;
  for (int v = 0; v < k.height(); ++v) {
    for (int u = 0; u < k.width(); ++u) {
      const double r = ref[static_cast<std::size_t>(v) * k.width() + u];
      if (map.visible(u, v) != (r > 0.0)) ++mask_mismatch;
      if (map.visible(u, v) && r > 0.0) worst = std::max(worst, std::abs(map.depth(u, v) - r));
    }
  }
  CHECK(mask_mismatch == 0);
  CHECK(worst < 1e-3);
}

}  // namespace

TEST_CASE("empty mesh renders background") {
  const DistanceMap map = render_distance_map(ObjectModel(), Pose::identity(), kCam32);
  CHECK(map.visible_count() == 0);
  for (double d : map.depth()) CHECK(d == 0.0);
}

TEST_CASE("plane depth at the principal point") {
  const CameraIntrinsics k(100, 100, 16, 16, 32, 32);
  const DistanceMap map = render_distance_map(flat_triangle(1000, 200), Pose::identity(), k);
  CHECK(map.visible(16, 16));
  CHECK(map.depth(16, 16) == doctest::Approx(1000.0).epsilon(1e-12));
}

TEST_CASE("z-buffer keeps the nearest surface") {
  const CameraIntrinsics k(100, 100, 16, 16, 32, 32);
  // Same footprint in the image: the far triangle is the near one scaled by 2.
  ObjectModel m({Vec3(-50, -50, 500), Vec3(50, -50, 500), Vec3(0, 50, 500), Vec3(-100, -100, 1000),
                 Vec3(100, -100, 1000), Vec3(0, 100, 1000)},
                {{3, 4, 5}, {0, 1, 2}});
  const DistanceMap map = render_distance_map(m, Pose::identity(), k);
  REQUIRE(map.visible_count() > 0);
  for (int v = 0; v < 32; ++v) {
    for (int u = 0; u < 32; ++u) {
      if (map.visible(u, v)) CHECK(map.depth(u, v) == doctest::Approx(500.0));
    }
  }
}

TEST_CASE("visibility matches positive depth") {
  Rng rng(3);
  const auto m = fixtures::random_model(rng, 10, 12, 40.0);
  const DistanceMap map = render_distance_map(m, fixtures::random_pose(rng, 20, 300, 400), kCam32);
  for (int v = 0; v < 32; ++v) {
    for (int u = 0; u < 32; ++u) CHECK(map.visible(u, v) == (map.depth(u, v) > 0.0));
  }
}

TEST_CASE("agreement with the ray-cast oracle") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Rng rng(seed);
    const int nv = 3 + static_cast<int>(rng.below(10));
    const int nt = 1 + static_cast<int>(rng.below(20));
    const auto m = fixtures::random_model(rng, nv, nt, 50.0);
    check_against_oracle(m, fixtures::random_pose(rng, 40, 200, 600), kCam32);
  }
}

TEST_CASE("near-plane clipping agrees with the oracle") {
  // Triangles straddling the camera plane: part of each lies behind z = 1.
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    Rng rng(seed);
    std::vector<Vec3> v;
    for (int i = 0; i < 9; ++i) v.emplace_back(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-20, 60));
    const ObjectModel m(v, {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}});
    check_against_oracle(m, Pose::identity(), kCam32);
  }
  // Entirely behind the camera.
  const DistanceMap map = render_distance_map(flat_triangle(-100, 50), Pose::identity(), kCam32);
  CHECK(map.visible_count() == 0);
}

TEST_CASE("shared edges cover each pixel exactly once") {
  // A quad split along its diagonal, with vertices on pixel centers so that
  // many pixels lie exactly on the shared and outer edges.
  const CameraIntrinsics k(1, 1, 0, 0, 16, 16);
  const double z = 1.0 + 0.0;
  auto at = [z](double u, double v) { return Vec3(u * z * 4, v * z * 4, z * 4); };
  const std::vector<Vec3> v = {at(2, 2), at(12, 3), at(11, 13), at(3, 12)};
  const DistanceMap a = render_distance_map(ObjectModel(v, {{0, 1, 2}}), Pose::identity(), k);
  const DistanceMap b = render_distance_map(ObjectModel(v, {{0, 2, 3}}), Pose::identity(), k);
  const DistanceMap both = render_distance_map(ObjectModel(v, {{0, 1, 2}, {0, 2, 3}}), Pose::identity(), k);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      CHECK_FALSE((a.visible(x, y) && b.visible(x, y)));
      CHECK(both.visible(x, y) == (a.visible(x, y) || b.visible(x, y)));
    }
  }
  // Winding must not matter.
  const DistanceMap flipped = render_distance_map(ObjectModel(v, {{0, 2, 1}}), Pose::identity(), k);
  CHECK(flipped == a);
}

TEST_CASE("moving away never increases the footprint") {
  Rng rng(9);
  for (int i = 0; i < 30; ++i) {
    const auto m = fixtures::random_model(rng, 8, 12, 30.0);
    const Pose p = fixtures::random_pose(rng, 5, 400, 500);
    std::size_t prev = render_distance_map(m, p, kCam32).visible_count();
    for (double dz : {50.0, 150.0, 400.0}) {
      const Pose q(p.rotation(), p.translation() + Vec3(0, 0, dz));
      const std::size_t n = render_distance_map(m, q, kCam32).visible_count();
      CHECK(n <= prev);
      prev = n;
    }
  }
}

TEST_CASE("rendering is deterministic") {
  Rng rng(4);
  const auto m = fixtures::random_model(rng, 12, 20, 40.0);
  const Pose p = fixtures::random_pose(rng, 10, 300, 400);
  CHECK(render_distance_map(m, p, kCam32) == render_distance_map(m, p, kCam32));
}

TEST_CASE("pgm dump") {
  DistanceMap map(3, 2);
  map.write_nearest(0, 0, 1000.4);
  map.write_nearest(2, 1, 70000.0);
  CHECK(distance_map_to_pgm(map) == "P2\n3 2\n65535\n1000 0 0\n0 0 65535\n");
}
