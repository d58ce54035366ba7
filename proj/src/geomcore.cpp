#include "fastpose/geomcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fastpose/errors.hpp"

namespace fastpose {

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  const Mat3 residual = r.transpose() * r - Mat3::Identity();
  if (residual.cwiseAbs().maxCoeff() >= tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!is_rotation(rotation_)) {
    std::ostringstream os;
    os << "matrix is not a proper rotation within " << kRotationTolerance;
    fail(ErrorCode::kInvalidRotation, os.str());
  }
  if (!translation_.allFinite()) fail(ErrorCode::kInvalidRotation, "translation is not finite");
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation_ = rotation_.transpose();
  out.translation_ = -(out.rotation_ * translation_);
  return out;
}

Pose operator*(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation_ = a.rotation_ * b.rotation_;
  out.translation_ = a.rotation_ * b.translation_ + a.translation_;
  return out;
}

// Written out so every caller gets the same left-to-right summation order;
// Eigen's unrolled product associates differently.
Vec3 transform_point(const Pose& pose, const Vec3& x) {
  const Mat3& r = pose.rotation();
  const Vec3& t = pose.translation();
  Vec3 y;
  for (int i = 0; i < 3; ++i) y(i) = r(i, 0) * x(0) + r(i, 1) * x(1) + r(i, 2) * x(2) + t(i);
  return y;
}

CameraIntrinsics::CameraIntrinsics(double fx, double fy, double cx, double cy, int width,
                                   int height)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height) {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    fail(ErrorCode::kInvalidCamera, "focal lengths must be positive and finite");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy)) {
    fail(ErrorCode::kInvalidCamera, "principal point must be finite");
  }
  if (width < 1 || height < 1) fail(ErrorCode::kInvalidCamera, "image size must be at least 1x1");
}

Vec2 project_point(const CameraIntrinsics& k, const Vec3& x) {
  if (!(x.z() > 0.0)) {
    std::ostringstream os;
    os << "point depth " << x.z() << " is not positive";
    fail(ErrorCode::kNonPositiveDepth, os.str());
  }
  return {k.fx() * x.x() / x.z() + k.cx(), k.fy() * x.y() / x.z() + k.cy()};
}

namespace {

bool is_identity(const Pose& p) {
  return (p.rotation() - Mat3::Identity()).cwiseAbs().maxCoeff() < kRotationTolerance &&
         p.translation().cwiseAbs().maxCoeff() < kRotationTolerance;
}

std::vector<Pose> with_identity_first(std::vector<Pose> symmetries) {
  std::vector<Pose> out;
  out.reserve(symmetries.size() + 1);
  out.push_back(Pose::identity());
  for (auto& s : symmetries) {
    if (!is_identity(s)) out.push_back(s);
  }
  return out;
}

}  // namespace

ObjectModel::ObjectModel(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
                         std::vector<Pose> symmetries, bool symmetric_flag)
    : vertices_(std::move(vertices)),
      triangles_(std::move(triangles)),
      symmetries_(with_identity_first(std::move(symmetries))),
      symmetric_flag_(symmetric_flag) {
  const int n = static_cast<int>(vertices_.size());
  for (std::size_t i = 0; i < triangles_.size(); ++i) {
    for (int idx : triangles_[i]) {
      if (idx < 0 || idx >= n) {
        std::ostringstream os;
        os << "triangle " << i << " references vertex " << idx << " of " << n;
        fail(ErrorCode::kInvalidModel, os.str());
      }
    }
  }
  for (const auto& v : vertices_) {
    if (!v.allFinite()) fail(ErrorCode::kInvalidModel, "vertex coordinate is not finite");
  }
  if (!vertices_.empty()) diameter_ = vertex_set_diameter(vertices_);
}

ObjectModel ObjectModel::with_symmetries(std::vector<Pose> symmetries, bool symmetric_flag) const {
  ObjectModel out = *this;
  out.symmetries_ = with_identity_first(std::move(symmetries));
  out.symmetric_flag_ = symmetric_flag;
  return out;
}

double vertex_set_diameter(std::span<const Vec3> vertices) {
  if (vertices.empty()) fail(ErrorCode::kEmptyModel, "model has no vertices");
  double best_sq = 0.0;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    for (std::size_t j = i + 1; j < vertices.size(); ++j) {
      best_sq = std::max(best_sq, (vertices[i] - vertices[j]).squaredNorm());
    }
  }
  return std::sqrt(best_sq);
}

double model_diameter(const ObjectModel& model) { return vertex_set_diameter(model.vertices()); }

Mat3 rot6d_to_matrix(std::span<const double, 6> v) {
  constexpr double kMinNorm = 1e-12;
  const Vec3 a1(v[0], v[1], v[2]);
  const Vec3 a2(v[3], v[4], v[5]);
  const double n1 = a1.norm();
  if (!(n1 >= kMinNorm)) fail(ErrorCode::kDegenerateInput, "first rotation vector is zero");
  const Vec3 b1 = a1 / n1;
  const Vec3 u2 = a2 - b1.dot(a2) * b1;
  const double n2 = u2.norm();
  if (!(n2 >= kMinNorm)) {
    fail(ErrorCode::kDegenerateInput, "second rotation vector is parallel to the first");
  }
  const Vec3 b2 = u2 / n2;
  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return m;
}

Mat3 rotation_about_axis(const Vec3& axis, double angle_rad) {
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q;
  double norm = 0.0;
  do {
    q = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    norm = q.norm();
  } while (norm < 1e-9);
  q.coeffs() /= norm;
  return q.toRotationMatrix();
}

}  // namespace fastpose
