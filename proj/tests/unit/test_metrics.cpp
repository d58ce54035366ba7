#include <doctest.h>

#include <cmath>
#include <limits>

#include "fastpose/errors.hpp"
#include "fastpose/metrics.hpp"
#include "oracles/oracles.hpp"
#include "support/fixtures.hpp"

using namespace fastpose;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool throws_code(ErrorCode code, auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

std::vector<oracle::RigidPose> oracle_syms(const ObjectModel& m) {
  std::vector<oracle::RigidPose> out;
  for (const auto& s : m.symmetries()) out.push_back(oracle::from_pose(s));
  return out;
}

ErrorSample scalar(int obj, MetricKind kind, double e) {
  ErrorSample s;
  s.obj_id = obj;
  s.kind = kind;
  s.error = e;
  return s;
}

ErrorSample vsd(int obj, std::vector<double> e) {
  ErrorSample s;
  s.obj_id = obj;
  s.kind = MetricKind::kVsd;
  s.vsd_errors = std::move(e);
  return s;
}

}  // namespace

TEST_CASE("e_add examples") {
  const auto cube = fixtures::unit_cube();
  const Pose p(fixtures::rz(30), Vec3(1, 2, 300));
  CHECK(e_add(cube, p, p) == 0.0);
  CHECK(e_add(cube, Pose(Mat3::Identity(), Vec3(3, 4, 10)), Pose(Mat3::Identity(), Vec3(0, 0, 10))) ==
        doctest::Approx(5.0));
  CHECK(e_add(cube, Pose(fixtures::rz(90), Vec3::Zero()), Pose::identity()) == doctest::Approx(1.0));
  CHECK(throws_code(ErrorCode::kEmptyModel, [] { e_add(ObjectModel(), Pose(), Pose()); }));
}

TEST_CASE("e_add_s examples") {
  const auto cube = fixtures::unit_cube();
  CHECK(e_add_s(cube, Pose(), Pose()) == 0.0);
  CHECK(e_add_s(cube, Pose(fixtures::rz(90), Vec3::Zero()), Pose()) < 1e-12);
  CHECK(throws_code(ErrorCode::kEmptyModel, [] { e_add_s(ObjectModel(), Pose(), Pose()); }));
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto m = fixtures::random_model(rng, 1 + static_cast<int>(rng.below(12)), 0, 50.0);
    const Pose a = fixtures::random_pose(rng, 50, 100, 500);
    const Pose b = fixtures::random_pose(rng, 50, 100, 500);
    CHECK(e_add_s(m, a, b) <= e_add(m, a, b));
  }
}

TEST_CASE("e_mssd examples") {
  const auto cube = fixtures::unit_cube();
  CHECK(e_mssd(cube, Pose(), Pose()) == 0.0);
  CHECK(e_mssd(cube, Pose(fixtures::rz(90), Vec3::Zero()), Pose()) == doctest::Approx(1.0));
  const auto sym = cube.with_symmetries({Pose(fixtures::rz(90), Vec3::Zero())}, true);
  const Pose gt(fixtures::rz(17), Vec3(5, -3, 400));
  CHECK(e_mssd(sym, gt * sym.symmetries()[1], gt) < 1e-6);
  CHECK(throws_code(ErrorCode::kEmptyModel, [] { e_mssd(ObjectModel(), Pose(), Pose()); }));
}

TEST_CASE("e_mspd examples") {
  const CameraIntrinsics k(100, 100, 0, 0, 640, 480);
  const ObjectModel point({Vec3::Zero()}, {});
  CHECK(e_mspd(point, Pose(Mat3::Identity(), Vec3(0, 0, 1000)), Pose(Mat3::Identity(), Vec3(0, 0, 1000)), k) == 0.0);
  CHECK(e_mspd(point, Pose(Mat3::Identity(), Vec3(10, 0, 1000)), Pose(Mat3::Identity(), Vec3(0, 0, 1000)), k) ==
        doctest::Approx(1.0));
  CHECK(throws_code(ErrorCode::kNonPositiveDepth, [&] {
    e_mspd(point, Pose(Mat3::Identity(), Vec3(0, 0, -5)), Pose(Mat3::Identity(), Vec3(0, 0, 1000)), k);
  }));
}

TEST_CASE("symmetry absorption") {
  Rng rng(21);
  const CameraIntrinsics k(500, 500, 320, 240, 640, 480);
  for (int i = 0; i < 50; ++i) {
    auto m = fixtures::random_model(rng, 12, 0, 40.0);
    m = m.with_symmetries(fixtures::random_symmetries(rng, 4), false);
    const Pose gt = fixtures::random_pose(rng, 30, 400, 600);
    for (const auto& s : m.symmetries()) {
      CHECK(e_mssd(m, gt * s, gt) < 1e-6);
      CHECK(e_mspd(m, gt * s, gt, k) < 1e-6);
    }
  }
}

TEST_CASE("metrics match the double-loop oracle exactly") {
  const CameraIntrinsics k(572.4, 573.6, 325.3, 242.0, 640, 480);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    auto m = fixtures::random_model(rng, 1 + static_cast<int>(rng.below(12)), 0, 60.0);
    m = m.with_symmetries(fixtures::random_symmetries(rng, 1 + static_cast<int>(rng.below(4))), false);
    const Pose gt = fixtures::random_pose(rng, 50, 500, 900);
    const Pose est = fixtures::perturb(rng, gt, 0.3, 20.0);
    const auto v = oracle::vertices_of(m);
    const auto oe = oracle::from_pose(est), og = oracle::from_pose(gt);
    CHECK(e_add(m, est, gt) == oracle::add(v, oe, og));
    CHECK(e_add_s(m, est, gt) == oracle::add_s(v, oe, og));
    CHECK(e_mssd(m, est, gt) == oracle::mssd(v, oracle_syms(m), oe, og));
    CHECK(e_mspd(m, est, gt, k) == oracle::mspd(v, oracle_syms(m), oe, og, k.fx(), k.fy(), k.cx(), k.cy()));
  }
}

TEST_CASE("e_vsd examples") {
  const CameraIntrinsics k(40, 40, 15.5, 15.5, 32, 32);
  const auto cube = fixtures::unit_cube(60.0);
  const Pose gt(fixtures::rz(20), Vec3(0, 0, 300));
  const std::vector<double> taus = {1, 5, 10};
  for (double e : e_vsd(cube, gt, gt, k, taus)) CHECK(e == 0.0);
  const Pose aside(gt.rotation(), Vec3(400, 0, 300));
  for (double e : e_vsd(cube, aside, gt, k, taus)) CHECK(e == 1.0);

  // Planar patch at 1000 vs 1005 mm with an identical footprint.
  DistanceMap a(4, 4), b(4, 4);
  for (int v = 0; v < 2; ++v) {
    for (int u = 0; u < 3; ++u) {
      a.write_nearest(u, v, 1000.0);
      b.write_nearest(u, v, 1005.0);
    }
  }
  const std::vector<double> t2 = {10.0, 3.0};
  const auto e = vsd_from_maps(a, b, t2);
  CHECK(e[0] == 0.0);
  CHECK(e[1] == 1.0);
  // Empty union is defined as zero error.
  CHECK(vsd_from_maps(DistanceMap(4, 4), DistanceMap(4, 4), t2) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("e_vsd matches the ray-cast reference and is monotone in tau") {
  const CameraIntrinsics k(40, 40, 15.5, 15.5, 32, 32);
  std::vector<double> taus;
  for (int i = 1; i <= 10; ++i) taus.push_back(i * 2.5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 500);
    const auto m = fixtures::random_model(rng, 12, 16, 40.0);
    const Pose gt = fixtures::random_pose(rng, 20, 300, 400);
    const Pose est = fixtures::perturb(rng, gt, 0.2, 10.0);
    const auto got = e_vsd(m, est, gt, k, taus);
    const auto ref = oracle::vsd(oracle::raycast_depth(m, est, k), oracle::raycast_depth(m, gt, k), taus);
    for (std::size_t i = 0; i < taus.size(); ++i) {
      CHECK(std::abs(got[i] - ref[i]) <= 1e-9);
      if (i > 0) CHECK(got[i] <= got[i - 1]);
    }
  }
}

TEST_CASE("recall_at") {
  const std::vector<double> e = {0.1, 0.2, 0.9};
  CHECK(recall_at(e, 0.5) == doctest::Approx(2.0 / 3.0));
  CHECK(recall_at(std::vector<double>{0, 0, 0}, 1e-9) == 1.0);
  CHECK(recall_at(std::vector<double>{kInf, kInf}, 1e9) == 0.0);
  CHECK(recall_at(std::vector<double>{0.5}, 0.5) == 0.0);  // strict
  CHECK(throws_code(ErrorCode::kEmptyInput, [] { recall_at(std::vector<double>{}, 1.0); }));
  Rng rng(1);
  std::vector<double> errs;
  for (int i = 0; i < 50; ++i) errs.push_back(rng.uniform(0, 10));
  double prev = 0.0;
  for (double t = 0.1; t < 12; t += 0.1) {
    const double r = recall_at(errs, t);
    CHECK(r >= prev);
    prev = r;
  }
}

TEST_CASE("bop threshold grids") {
  const auto g = ThresholdGrid::bop(640);
  REQUIRE(g.vsd_taus.size() == 10);
  REQUIRE(g.vsd_correctness.size() == 10);
  REQUIRE(g.mssd_correctness.size() == 10);
  REQUIRE(g.mspd_correctness.size() == 10);
  CHECK(g.vsd_taus.front() == 0.05);
  CHECK(g.vsd_taus.back() == 0.5);
  CHECK(g.mspd_correctness.front() == 5.0);
  CHECK(g.mspd_correctness.back() == 50.0);
  CHECK(g.add_correctness == std::vector<double>{0.02, 0.05, 0.10});
  CHECK(ThresholdGrid::bop(1280).r() == 2.0);
  ThresholdGrid bad = g;
  bad.vsd_taus = {0.1, 0.1};
  CHECK(throws_code(ErrorCode::kInvalidConfig, [&] { bad.validate(); }));
}

TEST_CASE("average recall: perfect estimates") {
  const auto g = ThresholdGrid::bop(640);
  std::vector<ErrorSample> s = {vsd(1, std::vector<double>(10, 0.0)), scalar(1, MetricKind::kMssd, 0),
                                scalar(1, MetricKind::kMspd, 0), scalar(1, MetricKind::kAdd, 0)};
  const auto r = average_recall(s, g, {{1, 100.0}});
  CHECK(r.ar_vsd == 1.0);
  CHECK(r.ar_mssd == 1.0);
  CHECK(r.ar_mspd == 1.0);
  CHECK(r.ar_add == 1.0);
  CHECK(r.ar_bop == 1.0);
  CHECK(r.vsd_recalls.size() == 100);
}

TEST_CASE("average recall: single MSPD sample at 27r") {
  const auto g = ThresholdGrid::bop(1280);
  std::vector<ErrorSample> s = {scalar(3, MetricKind::kMspd, 27.0 * g.r())};
  CHECK(average_recall(s, g, {{3, 50.0}}).ar_mspd == doctest::Approx(0.5));
}

TEST_CASE("average recall: hand-computed three-instance fixture") {
  const auto g = ThresholdGrid::bop(640);
  std::vector<ErrorSample> s = {
      // object 1, instance A
      vsd(1, std::vector<double>(10, 0.12)), scalar(1, MetricKind::kMssd, 12.0), scalar(1, MetricKind::kMspd, 27.0),
      scalar(1, MetricKind::kAdd, 4.0),
      // object 1, instance B: missed
      vsd(1, std::vector<double>(10, kInf)), scalar(1, MetricKind::kMssd, kInf), scalar(1, MetricKind::kMspd, kInf),
      scalar(1, MetricKind::kAdd, kInf),
      // object 2, instance C
      vsd(2, {0.475, 0.425, 0.375, 0.325, 0.275, 0.225, 0.175, 0.125, 0.075, 0.025}),
      scalar(2, MetricKind::kMssd, 0.0), scalar(2, MetricKind::kMspd, 49.9), scalar(2, MetricKind::kAddS, 3.0)};
  const auto r = average_recall(s, g, {{1, 100.0}, {2, 200.0}});
  CHECK(std::abs(r.ar_vsd - 0.475) < 1e-12);
  CHECK(std::abs(r.ar_mssd - 0.7) < 1e-12);
  CHECK(std::abs(r.ar_mspd - 0.175) < 1e-12);
  CHECK(std::abs(r.ar_bop - 0.45) < 1e-12);
  CHECK(std::abs(r.ar_add - 2.0 / 3.0) < 1e-12);
  CHECK(r.ar_bop == (r.ar_vsd + r.ar_mssd + r.ar_mspd) / 3.0);
  REQUIRE(r.objects.size() == 2);
  CHECK(r.objects[0].mssd.instances == 2);
  CHECK(r.instance_count == 3);
}

TEST_CASE("average recall errors") {
  const auto g = ThresholdGrid::bop(640);
  CHECK(throws_code(ErrorCode::kEmptyInput, [&] { average_recall({}, g, {}); }));
  std::vector<ErrorSample> s = {scalar(9, MetricKind::kMssd, 1.0)};
  CHECK(throws_code(ErrorCode::kMissingDiameter, [&] { average_recall(s, g, {{1, 10.0}}); }));
  std::vector<ErrorSample> short_vsd = {vsd(1, {0.1, 0.2})};
  CHECK(throws_code(ErrorCode::kLengthMismatch, [&] { average_recall(short_vsd, g, {{1, 10.0}}); }));
}

TEST_CASE("report serialization") {
  const auto g = ThresholdGrid::bop(640);
  std::vector<ErrorSample> s = {vsd(1, std::vector<double>(10, 0.0)), scalar(1, MetricKind::kMssd, 0),
                                scalar(1, MetricKind::kMspd, 0), scalar(1, MetricKind::kAdd, 0)};
  const auto r = average_recall(s, g, {{1, 100.0}});
  const std::string json = ar_report_to_json(r);
  CHECK(json.find("\"ar_bop\": 1.0") != std::string::npos);
  const std::string csv = ar_report_to_csv(r);
  CHECK(csv.rfind("scope,metric,tau,threshold,value\nall,AR_BOP,,,1\n", 0) == 0);
}
