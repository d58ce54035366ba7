#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "fastpose/rng.hpp"

namespace fastpose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Maximum deviation accepted for ‖RᵀR − I‖∞ and |det R − 1|.
inline constexpr double kRotationTolerance = 1e-6;

bool is_rotation(const Mat3& r, double tol = kRotationTolerance);

// Rigid transform x ↦ R·x + t, lengths in millimeters. The rotation is
// validated on construction and never re-orthogonalized.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  // Throws InvalidRotation.
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return Pose(); }

  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }

  Pose inverse() const;

  // (a * b)(x) = a(b(x)).
  friend Pose operator*(const Pose& a, const Pose& b);

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

Vec3 transform_point(const Pose& pose, const Vec3& x);

// Pinhole camera; (cx, cy) in pixel coordinates where integer values are
// pixel centers.
class CameraIntrinsics {
 public:
  // Throws InvalidCamera unless fx, fy > 0 and width, height >= 1.
  CameraIntrinsics(double fx, double fy, double cx, double cy, int width, int height);

  double fx() const noexcept { return fx_; }
  double fy() const noexcept { return fy_; }
  double cx() const noexcept { return cx_; }
  double cy() const noexcept { return cy_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;

 private:
  double fx_, fy_, cx_, cy_;
  int width_, height_;
};

// Throws NonPositiveDepth when x.z() <= 0.
Vec2 project_point(const CameraIntrinsics& k, const Vec3& x);

using Triangle = std::array<int, 3>;

// Triangle mesh in model coordinates. The diameter is computed from the
// vertices; the symmetry list always contains the identity (first).
class ObjectModel {
 public:
  ObjectModel() : symmetries_{Pose::identity()} {}
  // Throws InvalidModel when a triangle index is out of range.
  ObjectModel(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
              std::vector<Pose> symmetries = {}, bool symmetric_flag = false);

  const std::vector<Vec3>& vertices() const noexcept { return vertices_; }
  const std::vector<Triangle>& triangles() const noexcept { return triangles_; }
  const std::vector<Pose>& symmetries() const noexcept { return symmetries_; }
  double diameter() const noexcept { return diameter_; }
  bool symmetric_flag() const noexcept { return symmetric_flag_; }

  ObjectModel with_symmetries(std::vector<Pose> symmetries, bool symmetric_flag) const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Pose> symmetries_;
  double diameter_ = 0.0;
  bool symmetric_flag_ = false;
};

// Maximum pairwise vertex distance. Throws EmptyModel for no vertices.
double vertex_set_diameter(std::span<const Vec3> vertices);
double model_diameter(const ObjectModel& model);

// Gram-Schmidt on the two stacked 3-vectors (first column = first vector,
// third column = cross product). Throws DegenerateInput on near-zero norms.
Mat3 rot6d_to_matrix(std::span<const double, 6> v);

Mat3 rotation_about_axis(const Vec3& axis, double angle_rad);

// Uniformly distributed rotation (unit quaternion from four normals).
Mat3 random_rotation(Rng& rng);

}  // namespace fastpose
