#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include "evcharge/error.hpp"

namespace evcharge {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr double kPi = std::numbers::pi;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

// world w, plane p, cover b, camera c, end-effector e, axis a, image i,
// current camera ĉ, port q
enum class FrameId { kWorld, kPlane, kCover, kCamera, kEndEffector, kAxis, kImage, kCurrentCamera, kPort };

inline std::string_view to_string(FrameId f) {
  switch (f) {
    case FrameId::kWorld: return "w";
    case FrameId::kPlane: return "p";
    case FrameId::kCover: return "b";
    case FrameId::kCamera: return "c";
    case FrameId::kEndEffector: return "e";
    case FrameId::kAxis: return "a";
    case FrameId::kImage: return "i";
    case FrameId::kCurrentCamera: return "c^";
    case FrameId::kPort: return "q";
  }
  return "?";
}

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return s;
}

/// Proper rotation matrix. Construction validates RᵀR = I and det = +1
/// within `kTolerance`.
class Rotation {
 public:
  static constexpr double kTolerance = 1e-9;

  Rotation() : m_(Mat3::Identity()) {}

  static Rotation identity() { return Rotation(); }

  static Rotation from_matrix(const Mat3& m) {
    require(m.allFinite(), ErrorKind::kInvalidArgument, "rotation has non-finite entries");
    const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
    require(ortho <= kTolerance, ErrorKind::kInvalidArgument,
            "matrix is not orthonormal (|RtR - I| = " + std::to_string(ortho) + ")");
    require(std::abs(m.determinant() - 1.0) <= kTolerance, ErrorKind::kInvalidArgument,
            "matrix is not a proper rotation (det != +1)");
    return Rotation(m);
  }

  static Rotation about_x(double angle) {
    return Rotation(Eigen::AngleAxisd(angle, Vec3::UnitX()).toRotationMatrix());
  }
  static Rotation about_y(double angle) {
    return Rotation(Eigen::AngleAxisd(angle, Vec3::UnitY()).toRotationMatrix());
  }
  static Rotation about_z(double angle) {
    return Rotation(Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix());
  }
  static Rotation about_axis(const Vec3& axis, double angle) {
    require(axis.norm() > 1e-12, ErrorKind::kInvalidArgument, "rotation axis has zero length");
    return Rotation(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix());
  }

  /// Exponential map of a rotation vector (axis * angle).
  static Rotation exp(const Vec3& rotvec) {
    const double theta = rotvec.norm();
    if (theta < 1e-12) {
      // second-order series, then re-project
      Mat3 m = Mat3::Identity() + skew(rotvec) + 0.5 * skew(rotvec) * skew(rotvec);
      return Rotation(project(m));
    }
    return Rotation(Eigen::AngleAxisd(theta, rotvec / theta).toRotationMatrix());
  }

  /// Nearest rotation in the Frobenius sense.
  static Mat3 project(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
    return u * v.transpose();
  }

  const Mat3& matrix() const { return m_; }
  Vec3 col(int i) const { return m_.col(i); }

  Rotation operator*(const Rotation& o) const { return Rotation(project_if_needed(m_ * o.m_)); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  Rotation inverse() const { return Rotation(m_.transpose()); }

  /// Geodesic angle to another rotation, radians.
  double angle_to(const Rotation& o) const {
    const double c = std::clamp(((m_.transpose() * o.m_).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
  }

  /// Largest column correction applied by Gram-Schmidt when this rotation was
  /// built from estimated axes; zero otherwise.
  double orthonormalization_correction() const { return correction_; }

 private:
  explicit Rotation(const Mat3& m, double correction = 0.0) : m_(m), correction_(correction) {}

  // Long products drift; re-project only when the drift becomes visible.
  static Mat3 project_if_needed(const Mat3& m) {
    const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho > 1e-12 ? project(m) : m;
  }

  friend Rotation rotation_from_axes(const Vec3&, const Vec3&, const Vec3&);

  Mat3 m_;
  double correction_ = 0.0;
};

/// Rigid transform H_{from,to}: maps coordinates expressed in `to` into
/// `from`, i.e. p_from = R * p_to + t.
class Pose {
 public:
  Pose() = default;
  Pose(const Rotation& r, const Vec3& t, FrameId from, FrameId to)
      : r_(r), t_(t), from_(from), to_(to) {
    require(t.allFinite(), ErrorKind::kInvalidArgument, "pose translation is not finite");
  }

  static Pose identity(FrameId from, FrameId to) { return Pose(Rotation::identity(), Vec3::Zero(), from, to); }

  const Rotation& rotation() const { return r_; }
  const Vec3& translation() const { return t_; }
  FrameId from() const { return from_; }
  FrameId to() const { return to_; }

  Vec3 apply(const Vec3& p) const { return r_ * p + t_; }

  Mat4 matrix() const {
    Mat4 h = Mat4::Identity();
    h.topLeftCorner<3, 3>() = r_.matrix();
    h.topRightCorner<3, 1>() = t_;
    return h;
  }

  Pose with_translation(const Vec3& t) const { return Pose(r_, t, from_, to_); }
  Pose with_rotation(const Rotation& r) const { return Pose(r, t_, from_, to_); }

 private:
  Rotation r_;
  Vec3 t_ = Vec3::Zero();
  FrameId from_ = FrameId::kWorld;
  FrameId to_ = FrameId::kWorld;
};

/// H_ab ∘ H_bc = H_ac. Throws on frame mismatch.
inline Pose compose(const Pose& a, const Pose& b) {
  if (a.to() != b.from()) {
    fail(ErrorKind::kFrameMismatch, "cannot compose H_" + std::string(to_string(a.from())) +
                                        std::string(to_string(a.to())) + " with H_" +
                                        std::string(to_string(b.from())) + std::string(to_string(b.to())));
  }
  return Pose(a.rotation() * b.rotation(), a.translation() + a.rotation() * b.translation(), a.from(), b.to());
}

inline Pose invert(const Pose& p) {
  const Rotation rt = p.rotation().inverse();
  return Pose(rt, -(rt * p.translation()), p.to(), p.from());
}

/// Spatial velocity expressed in `frame`.
struct Twist {
  Vec3 linear = Vec3::Zero();
  Vec3 angular = Vec3::Zero();
  FrameId frame = FrameId::kWorld;

  static Twist zero(FrameId f) { return Twist{Vec3::Zero(), Vec3::Zero(), f}; }

  bool finite() const { return linear.allFinite() && angular.allFinite(); }

  Eigen::Matrix<double, 6, 1> stacked() const {
    Eigen::Matrix<double, 6, 1> v;
    v << linear, angular;
    return v;
  }

  Twist scaled(double s) const { return Twist{linear * s, angular * s, frame}; }
};

/// Re-expresses a twist in another frame: both parts are rotated by R (which
/// maps `twist.frame` coordinates to `target` coordinates).
inline Twist rotate_twist(const Rotation& r, const Twist& twist, FrameId target) {
  return Twist{r * twist.linear, r * twist.angular, target};
}

/// Moves the reference point of a twist: the returned linear part is the
/// velocity of the point located at `offset` from the original reference point.
inline Twist shift_twist_reference(const Twist& twist, const Vec3& offset) {
  return Twist{twist.linear + twist.angular.cross(offset), twist.angular, twist.frame};
}

inline constexpr double kAxisTolerance = 1e-6;

/// x̂ = ŷ × ẑ, renormalized. Throws when the inputs are (nearly) parallel.
inline Vec3 cover_x_axis(const Vec3& y, const Vec3& z) {
  require(std::abs(y.norm() - 1.0) <= kAxisTolerance && std::abs(z.norm() - 1.0) <= kAxisTolerance,
          ErrorKind::kInvalidArgument, "cover axes must be unit vectors");
  const Vec3 x = y.cross(z);
  require(x.norm() > 1e-6, ErrorKind::kDegenerateGeometry, "cover y and z axes are parallel");
  return x.normalized();
}

/// R = [x̂ ŷ ẑ]. Inputs must be orthonormal within 1e-6 and right-handed;
/// small violations are removed by Gram-Schmidt (ẑ kept, ŷ projected, x̂ = ŷ × ẑ)
/// and the size of the correction is stored on the result.
inline Rotation rotation_from_axes(const Vec3& x, const Vec3& y, const Vec3& z) {
  const auto unit = [](const Vec3& v) { return std::abs(v.norm() - 1.0) <= kAxisTolerance; };
  require(x.allFinite() && y.allFinite() && z.allFinite(), ErrorKind::kInvalidArgument, "non-finite axis");
  require(unit(x) && unit(y) && unit(z), ErrorKind::kDegenerateGeometry, "axes are not unit-norm within 1e-6");
  require(std::abs(x.dot(y)) <= kAxisTolerance && std::abs(y.dot(z)) <= kAxisTolerance &&
              std::abs(x.dot(z)) <= kAxisTolerance,
          ErrorKind::kDegenerateGeometry, "axes are not mutually orthogonal within 1e-6");
  require(x.dot(y.cross(z)) > 0.0, ErrorKind::kDegenerateGeometry, "axes form a left-handed triple");

  const Vec3 zn = z.normalized();
  const Vec3 yn = (y - y.dot(zn) * zn).normalized();
  const Vec3 xn = yn.cross(zn);
  Mat3 m;
  m.col(0) = xn;
  m.col(1) = yn;
  m.col(2) = zn;
  const double correction = std::max({(xn - x).norm(), (yn - y).norm(), (zn - z).norm()});
  return Rotation(m, correction);
}

/// Angle between two directions, radians.
inline double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace evcharge
