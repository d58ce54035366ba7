#pragma once

// Independent reference implementations used by the tests. They work on
// plain arrays with explicit loops and share no code with the library
// beyond reading its data structures.

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "fastpose/geomcore.hpp"
#include "fastpose/tensornet.hpp"

namespace oracle {

using P3 = std::array<double, 3>;

struct RigidPose {
  double r[9];  // row-major
  double t[3];
};

RigidPose from_pose(const fastpose::Pose& p);
std::vector<P3> vertices_of(const fastpose::ObjectModel& m);

P3 rigid(const RigidPose& p, const P3& x);
double dist(const P3& a, const P3& b);

double add(const std::vector<P3>& v, const RigidPose& est, const RigidPose& gt);
double add_s(const std::vector<P3>& v, const RigidPose& est, const RigidPose& gt);
double mssd(const std::vector<P3>& v, const std::vector<RigidPose>& syms, const RigidPose& est,
            const RigidPose& gt);
double mspd(const std::vector<P3>& v, const std::vector<RigidPose>& syms, const RigidPose& est,
            const RigidPose& gt, double fx, double fy, double cx, double cy);

// Per-pixel ray cast: depth (camera z, 0 = miss) of the nearest triangle hit
// along ((u - cx)/fx, (v - cy)/fy, 1) with z >= 1. Row-major, v * w + u.
std::vector<double> raycast_depth(const fastpose::ObjectModel& model, const fastpose::Pose& pose,
                                  const fastpose::CameraIntrinsics& k);

// VSD over two depth images (0 = not visible).
std::vector<double> vsd(const std::vector<double>& est, const std::vector<double>& gt,
                        const std::vector<double>& taus);

// Counts MACs (Conv2D, Dense) and elementwise ops (GroupNorm, ReLU,
// Upsample) by walking every output element of every layer.
struct NaiveFlops {
  std::uint64_t macs = 0;
  std::uint64_t elementwise = 0;
};
NaiveFlops naive_flops(const fastpose::LayerGraph& graph);
std::uint64_t naive_params(const fastpose::LayerGraph& graph);

// Direct-loop convolution (no im2col) for one Conv2D layer.
std::vector<double> direct_conv(const std::vector<double>& input, int in_c, int h, int w,
                                const std::vector<double>& weight, const std::vector<double>& bias, int out_c,
                                int k, int stride, int pad, int* out_h, int* out_w);

// Central difference of f at x (in place perturbation, restored).
double central_difference(const std::function<double()>& f, double& x, double h);

// |a - n| <= rel * max(|a|, |n|) + abs_floor.
bool grad_close(double analytic, double numeric, double rel = 1e-4, double abs_floor = 1e-7);

}  // namespace oracle
