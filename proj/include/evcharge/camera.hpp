#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <vector>

#include "evcharge/geometry.hpp"

namespace evcharge {

struct Intrinsics {
  double fx = 600.0;
  double fy = 600.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  void validate() const {
    require(fx > 0.0 && fy > 0.0, ErrorKind::kInvalidArgument, "focal lengths must be positive");
    require(width > 0 && height > 0, ErrorKind::kInvalidArgument, "image size must be positive");
    require(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height, ErrorKind::kInvalidArgument,
            "principal point must lie inside the image");
  }

  bool contains(double u, double v) const { return u >= 0.0 && u < width && v >= 0.0 && v < height; }
};

/// Un-centered pixel coordinates plus the feature depth in the camera frame.
struct PixelFeature {
  double u = 0.0;
  double v = 0.0;
  double z = 1.0;
};

using InteractionMatrix = Eigen::Matrix<double, Eigen::Dynamic, 6>;
using RowPair = Eigen::Matrix<double, 2, 6>;

inline PixelFeature project(const Vec3& p, const Intrinsics& intr) {
  require(p.allFinite(), ErrorKind::kInvalidArgument, "point is not finite");
  if (p.z() <= 1e-6) fail(ErrorKind::kVisibility, "point lies at or behind the optical plane");
  return PixelFeature{intr.cx + intr.fx * p.x() / p.z(), intr.cy + intr.fy * p.y() / p.z(), p.z()};
}

// Column order is (v_x, v_y, v_z, ω_x, ω_y, ω_z). The twist is the velocity of
// the observed scene relative to the current camera, expressed in the camera
// frame: a point P moves as Ṗ = v + ω × P. Under that convention the matrix
// below is exact with no sign changes; a camera moving with twist ξ induces
// the scene twist -ξ.
inline RowPair interaction_matrix_row_pair(const PixelFeature& f, const Intrinsics& intr) {
  require(f.z > 0.0, ErrorKind::kInvalidArgument, "feature depth must be positive");
  const double u = f.u - intr.cx;
  const double v = f.v - intr.cy;
  const double fx = intr.fx;
  const double fy = intr.fy;
  const double z = f.z;
  RowPair j;
  j << fx / z, 0.0, -u / z, -u * v / fy, (fx * fx + u * u) / fx, -fx * v / fy,
       0.0, fy / z, -v / z, -(fy * fy + v * v) / fy, u * v / fx, fy * u / fx;
  return j;
}

inline InteractionMatrix stack_interaction_matrix(std::span<const PixelFeature> feats, const Intrinsics& intr) {
  InteractionMatrix j(2 * static_cast<Eigen::Index>(feats.size()), 6);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    j.block<2, 6>(2 * static_cast<Eigen::Index>(i), 0) = interaction_matrix_row_pair(feats[i], intr);
  }
  return j;
}

inline double mean_pixel_error(std::span<const PixelFeature> a, std::span<const PixelFeature> b) {
  require(a.size() == b.size() && !a.empty(), ErrorKind::kInvalidArgument, "feature lists differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::hypot(a[i].u - b[i].u, a[i].v - b[i].v);
  return sum / static_cast<double>(a.size());
}

struct ServoOptions {
  double damping = 1e-6;       // relative to ‖J‖₂²
  double rank_floor = 1e-8;    // σ_min / σ_max below this is rank deficient
};

/// Camera velocity command in {Ô_c} driving `current` toward `target` with
/// desired feature velocity -λ(current - target). Solves the scene-relative
/// twist with a Tikhonov-damped pseudoinverse and returns its negation (the
/// motion the camera itself must make).
inline Twist servo_twist(std::span<const PixelFeature> current, std::span<const PixelFeature> target,
                         const Intrinsics& intr, double gain, const ServoOptions& opts = {}) {
  require(current.size() == target.size(), ErrorKind::kInvalidArgument, "feature lists differ in length");
  require(current.size() >= 3, ErrorKind::kInvalidArgument, "at least three features are required");
  const InteractionMatrix j = stack_interaction_matrix(current, intr);
  Eigen::VectorXd desired(j.rows());
  for (std::size_t i = 0; i < current.size(); ++i) {
    desired(2 * static_cast<Eigen::Index>(i)) = -gain * (current[i].u - target[i].u);
    desired(2 * static_cast<Eigen::Index>(i) + 1) = -gain * (current[i].v - target[i].v);
  }

  Eigen::JacobiSVD<InteractionMatrix> svd(j);
  const double smax = svd.singularValues().maxCoeff();
  const double smin = svd.singularValues().minCoeff();
  const double mu = opts.damping * smax * smax;
  if (smin <= opts.rank_floor * smax) {
    fail(ErrorKind::kDegenerateConfiguration, "feature configuration is rank deficient");
  }
  const Eigen::Matrix<double, 6, 6> normal = j.transpose() * j + mu * Eigen::Matrix<double, 6, 6>::Identity();
  const Eigen::Matrix<double, 6, 1> scene = normal.ldlt().solve(j.transpose() * desired);
  return Twist{-scene.head<3>(), -scene.tail<3>(), FrameId::kCurrentCamera};
}

/// v_we = R_we R_ec v_ĉc for both linear and angular parts.
inline Twist camera_twist_to_ee(const Twist& camera_twist, const Rotation& r_we, const Rotation& r_ec) {
  if (camera_twist.frame != FrameId::kCurrentCamera && camera_twist.frame != FrameId::kCamera) {
    fail(ErrorKind::kFrameMismatch,
         "expected a camera-frame twist, got frame " + std::string(to_string(camera_twist.frame)));
  }
  return rotate_twist(r_we * r_ec, camera_twist, FrameId::kWorld);
}

/// In-plane rotation (radians, image coordinates) that best maps the target
/// pattern onto the current one about their centroids (2-D Procrustes).
inline double image_rotation(std::span<const PixelFeature> current, std::span<const PixelFeature> target) {
  require(current.size() == target.size() && current.size() >= 2, ErrorKind::kInvalidArgument,
          "feature lists differ in length");
  Vec2 cc = Vec2::Zero();
  Vec2 tc = Vec2::Zero();
  for (std::size_t i = 0; i < current.size(); ++i) {
    cc += Vec2(current[i].u, current[i].v);
    tc += Vec2(target[i].u, target[i].v);
  }
  cc /= static_cast<double>(current.size());
  tc /= static_cast<double>(target.size());
  double s = 0.0;
  double c = 0.0;
  for (std::size_t i = 0; i < current.size(); ++i) {
    const Vec2 a = Vec2(target[i].u, target[i].v) - tc;
    const Vec2 b = Vec2(current[i].u, current[i].v) - cc;
    s += a.x() * b.y() - a.y() * b.x();
    c += a.dot(b);
  }
  return std::atan2(s, c);
}

/// Target pattern rotated by `angle` about its own centroid.
inline std::vector<PixelFeature> rotate_pattern(std::span<const PixelFeature> target, double angle) {
  Vec2 tc = Vec2::Zero();
  for (const auto& f : target) tc += Vec2(f.u, f.v);
  tc /= static_cast<double>(target.size());
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  std::vector<PixelFeature> out;
  out.reserve(target.size());
  for (const auto& f : target) {
    const Vec2 d = Vec2(f.u, f.v) - tc;
    out.push_back(PixelFeature{tc.x() + c * d.x() - s * d.y(), tc.y() + s * d.x() + c * d.y(), f.z});
  }
  return out;
}

}  // namespace evcharge
