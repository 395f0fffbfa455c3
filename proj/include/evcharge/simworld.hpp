#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "evcharge/camera.hpp"
#include "evcharge/geometry.hpp"
#include "evcharge/hole_geometry.hpp"
#include "evcharge/pi_controller.hpp"
#include "evcharge/point_cloud.hpp"

namespace evcharge {

struct Wrench {
  Vec3 force = Vec3::Zero();   // N
  Vec3 torque = Vec3::Zero();  // N·m
  FrameId frame = FrameId::kEndEffector;

  bool finite() const { return force.allFinite() && torque.allFinite(); }
  bool is_zero() const { return force.isZero(0.0) && torque.isZero(0.0); }
  Eigen::Matrix<double, 6, 1> stacked() const {
    Eigen::Matrix<double, 6, 1> s;
    s << force, torque;
    return s;
  }
};

/// Plane with the world normal -x_w, plane y = world z (vertical hinge).
inline Pose default_plane_pose() {
  Mat3 r;
  r.col(0) = -Vec3::UnitY();
  r.col(1) = Vec3::UnitZ();
  r.col(2) = -Vec3::UnitX();
  return Pose(Rotation::from_matrix(r), Vec3(0.6, 0.0, 0.5), FrameId::kWorld, FrameId::kPlane);
}

/// Camera rotation whose optical axis (+z) points from `eye` to `target`, with
/// image "up" (-y) as close as possible to `up`.
inline Rotation look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 y = -(up - up.dot(z) * z);
  require(y.norm() > 1e-9, ErrorKind::kDegenerateGeometry, "look-at up vector is parallel to the view ray");
  y.normalize();
  return rotation_from_axes(y.cross(z), y, z);
}

struct SceneConfig {
  double cover_angle_deg = 45.0;
  double cover_radius = 0.04;        // r_b
  double cover_thickness = 0.003;
  double port_radius = 0.01;         // r_o, inradius of the insertion hole
  double feature_radius = 0.02;      // pentagon of circle centres on the port face
  double plane_half_size = 0.15;
  double background_offset = 0.25;   // background wall behind the plane
  Pose plane_pose = default_plane_pose();  // H_wp
  double sigma_depth = 0.001;
  double edge_dropout = 0.0;         // fraction of cover area missing at its free edge
  double sigma_px = 0.5;
  bool features_occluded = false;
  HoleShape hole = HoleShape::kCircle;
  std::uint64_t seed = 1;
  Intrinsics depth_intrinsics{300.0, 300.0, 160.0, 120.0, 320, 240};
  Intrinsics rgb_intrinsics{};
  Vec3 depth_camera_in_plane = Vec3(-0.12, 0.0, 0.30);  // eye position of the perception view

  void validate() const {
    require(cover_radius > 0.0 && port_radius > 0.0 && feature_radius > 0.0 && cover_thickness > 0.0,
            ErrorKind::kConfig, "scene radii must be positive");
    require(cover_angle_deg >= 0.0 && cover_angle_deg <= 100.0, ErrorKind::kConfig,
            "cover angle must lie in [0, 100] degrees");
    require(edge_dropout >= 0.0 && edge_dropout <= 1.0, ErrorKind::kConfig, "edge dropout must lie in [0, 1]");
    require(sigma_depth >= 0.0 && sigma_px >= 0.0, ErrorKind::kConfig, "noise levels must be non-negative");
    require(plane_half_size > cover_radius * 2.0, ErrorKind::kConfig, "plane too small for the cover");
    depth_intrinsics.validate();
    rgb_intrinsics.validate();
  }
};

/// Charger-side constants shared by the stage controllers and the world.
struct ChargerModel {
  double tip_radius = 0.012;
  double contact_stiffness = 5000.0;  // N/m, tip against cover or plane
  double hook_stiffness = 1000.0;     // N/m, latched deviation from the true hinge circle
  double hinge_friction = 0.3;        // N while the cover is being swung
  double latch_tolerance = 0.006;     // m, tip distance to the true latch spot
  Vec3 camera_offset = Vec3(0.0, 0.03, -0.12);  // T_ec
  double max_linear = 0.5;            // m/s
  double max_angular = 1.0;           // rad/s
};

struct WorldState {
  Pose ee = Pose(Rotation::identity(), Vec3(0.3, 0.0, 0.5), FrameId::kWorld, FrameId::kEndEffector);
  double cover_angle = 0.0;  // rad
  double time = 0.0;
  bool latched = false;
  bool touching = false;
  Vec3 force = Vec3::Zero();  // on the charger, world frame

  // latch bookkeeping, true-hinge coordinates
  double latch_radius = 0.0;
  double latch_axial = 0.0;
  double latch_phase = 0.0;
  double latch_angle = 0.0;
};

/// Segment-area fraction -> signed chord position on a unit disc (the cut
/// removes the part with x > returned value).
inline double chord_for_area_fraction(double f) {
  if (f <= 0.0) return 1.0;
  if (f >= 1.0) return -1.0;
  double lo = -1.0, hi = 1.0;
  for (int i = 0; i < 80; ++i) {
    const double c = 0.5 * (lo + hi);
    const double seg = (std::acos(c) - c * std::sqrt(1.0 - c * c)) / kPi;
    (seg > f ? lo : hi) = c;
  }
  return 0.5 * (lo + hi);
}

class World {
 public:
  explicit World(const SceneConfig& cfg, const ChargerModel& charger = {}) : cfg_(cfg), charger_(charger) {
    cfg_.validate();
    state_.cover_angle = deg2rad(cfg.cover_angle_deg);
    update_contact();
  }

  const SceneConfig& config() const { return cfg_; }
  const ChargerModel& charger() const { return charger_; }
  const WorldState& state() const { return state_; }
  const Pose& plane_pose() const { return cfg_.plane_pose; }

  // ---- ground truth (plane frame unless stated) ----

  Vec3 hinge_point_plane() const { return Vec3(-cfg_.cover_radius, 0.0, 0.0); }

  /// H_pb at the given opening angle: rotation about the plane y axis through
  /// the hinge line at x = -r_b.
  Pose cover_in_plane(double angle) const {
    const Rotation r = Rotation::about_y(-angle);
    const Vec3 c = hinge_point_plane() + r * Vec3(cfg_.cover_radius, 0.0, 0.0);
    return Pose(r, c, FrameId::kPlane, FrameId::kCover);
  }
  Pose cover_pose_world() const { return compose(cfg_.plane_pose, cover_in_plane(state_.cover_angle)); }

  Vec3 hinge_point_world() const { return cfg_.plane_pose.apply(hinge_point_plane()); }
  Vec3 hinge_direction_world() const { return cfg_.plane_pose.rotation().col(1); }

  std::array<Vec3, 5> feature_points_world() const {
    std::array<Vec3, 5> out;
    for (int i = 0; i < 5; ++i) {
      const double a = kPi / 2 + 2 * kPi * i / 5.0;
      out[i] = cfg_.plane_pose.apply(Vec3(cfg_.feature_radius * std::cos(a), cfg_.feature_radius * std::sin(a), 0.0));
    }
    return out;
  }

  /// Where the charger tip sits when hooked under the free edge of the cover,
  /// in cover coordinates.
  Vec3 latch_point_cover() const {
    return Vec3(cfg_.cover_radius, 0.0, -(cfg_.cover_thickness + charger_.tip_radius));
  }

  /// Pose of the perception depth camera.
  Pose depth_camera_pose() const {
    const Vec3 eye = cfg_.plane_pose.apply(cfg_.depth_camera_in_plane);
    const Vec3 target = cfg_.plane_pose.translation();
    return Pose(look_at(eye, target, hinge_direction_world()), eye, FrameId::kWorld, FrameId::kCamera);
  }

  /// End-effector pose with the charger tip `standoff` in front of the port,
  /// approach axis z_e = -plane normal.
  Pose insertion_ready_pose(double standoff = 0.03) const {
    const Mat3& rp = cfg_.plane_pose.rotation().matrix();
    Mat3 r;
    r.col(0) = rp.col(0);
    r.col(1) = -rp.col(1);
    r.col(2) = -rp.col(2);
    const Vec3 t = cfg_.plane_pose.apply(Vec3(0.0, 0.0, standoff));
    return Pose(Rotation::from_matrix(r), t, FrameId::kWorld, FrameId::kEndEffector);
  }

  Pose camera_pose_of(const Pose& ee) const {
    return compose(ee, Pose(Rotation::identity(), charger_.camera_offset, FrameId::kEndEffector, FrameId::kCamera));
  }

  // ---- commands ----

  /// Position-controlled transfer move (no contact checking along the way).
  void move_ee(const Pose& ee) {
    require(ee.from() == FrameId::kWorld && ee.to() == FrameId::kEndEffector, ErrorKind::kFrameMismatch,
            "end-effector pose must be H_we");
    state_.ee = ee;
    update_contact();
  }

  /// Integrates a world-frame end-effector twist (linear part is the velocity
  /// of the end-effector origin).
  void step(const Twist& twist, double dt) {
    require(dt > 0.0 && dt <= 0.05, ErrorKind::kInvalidArgument, "dt must lie in (0, 0.05]");
    require(twist.frame == FrameId::kWorld, ErrorKind::kFrameMismatch, "step expects a world-frame twist");
    require(twist.finite(), ErrorKind::kInvalidArgument, "twist is not finite");
    if (twist.linear.norm() > charger_.max_linear + 1e-12 || twist.angular.norm() > charger_.max_angular + 1e-12) {
      fail(ErrorKind::kSafetyLimit, "twist exceeds the safety cap");
    }
    const Rotation r = Rotation::exp(twist.angular * dt) * state_.ee.rotation();
    const Vec3 t = state_.ee.translation() + twist.linear * dt;
    state_.ee = Pose(r, t, FrameId::kWorld, FrameId::kEndEffector);
    state_.time += dt;
    update_contact();
  }

  /// Hooks the tip under the cover edge if it is close enough to the true
  /// latch spot.
  bool try_latch() {
    const Vec3 spot = cover_pose_world().apply(latch_point_cover());
    if ((state_.ee.translation() - spot).norm() > charger_.latch_tolerance) return false;
    const auto [rho, axial, phase] = hinge_coordinates(state_.ee.translation());
    state_.latched = true;
    state_.latch_radius = rho;
    state_.latch_axial = axial;
    state_.latch_phase = phase;
    state_.latch_angle = state_.cover_angle;
    update_contact();
    return true;
  }
  void release() {
    state_.latched = false;
    update_contact();
  }

  Wrench wrench() const { return Wrench{state_.force, Vec3::Zero(), FrameId::kWorld}; }

  /// (radius, axial, phase) of a world point about the true hinge line; the
  /// phase grows as the cover opens.
  std::array<double, 3> hinge_coordinates(const Vec3& p_world) const {
    const Vec3 p = invert(cfg_.plane_pose).apply(p_world) - hinge_point_plane();
    const double rho = std::hypot(p.x(), p.z());
    return {rho, p.y(), std::atan2(p.z(), p.x())};
  }

 private:
  void update_contact() {
    const Vec3 tip = state_.ee.translation();
    Vec3 f = Vec3::Zero();
    bool touching = false;
    if (state_.latched) {
      const auto [rho, axial, phase] = hinge_coordinates(tip);
      const double target = state_.latch_angle + (phase - state_.latch_phase);
      const double lim = deg2rad(100.0);
      const double prev = state_.cover_angle;
      state_.cover_angle = std::clamp(target, 0.0, lim);
      // deviation of the tip from where the hook holds it
      const Mat3& rp = cfg_.plane_pose.rotation().matrix();
      const Vec3 radial_dir = rp * Vec3(std::cos(phase), 0.0, std::sin(phase));
      const Vec3 tangent_dir = rp * Vec3(-std::sin(phase), 0.0, std::cos(phase));
      const Vec3 axis = rp.col(1);
      f -= charger_.hook_stiffness * (rho - state_.latch_radius) * radial_dir;
      f -= charger_.hook_stiffness * (axial - state_.latch_axial) * axis;
      f -= charger_.hook_stiffness * rho * (target - state_.cover_angle) * tangent_dir;
      if (state_.cover_angle != prev) f -= charger_.hinge_friction * (state_.cover_angle > prev ? 1.0 : -1.0) * tangent_dir;
      touching = true;
    } else {
      // sphere tip against the cover slab
      const Pose cover = cover_pose_world();
      const Vec3 q = invert(cover).apply(tip);
      const double rr = std::hypot(q.x(), q.y());
      const double zc = std::clamp(q.z(), -cfg_.cover_thickness, 0.0);
      Vec3 closest;
      if (rr <= cfg_.cover_radius && q.z() >= -cfg_.cover_thickness && q.z() <= 0.0) {
        // centre inside the slab: push out through the nearest face
        const double to_top = -q.z();
        const double to_bottom = q.z() + cfg_.cover_thickness;
        const double to_rim = cfg_.cover_radius - rr;
        Vec3 n;
        double d;
        if (to_rim <= std::min(to_top, to_bottom)) {
          n = rr > 1e-12 ? Vec3(q.x() / rr, q.y() / rr, 0.0) : Vec3::UnitX();
          d = to_rim;
        } else if (to_top <= to_bottom) {
          n = Vec3::UnitZ();
          d = to_top;
        } else {
          n = -Vec3::UnitZ();
          d = to_bottom;
        }
        f += cover.rotation() * (charger_.contact_stiffness * (charger_.tip_radius + d) * n);
        touching = true;
      } else {
        const double s = rr > cfg_.cover_radius ? cfg_.cover_radius / rr : 1.0;
        closest = Vec3(q.x() * s, q.y() * s, zc);
        const Vec3 d = q - closest;
        const double dist = d.norm();
        if (dist < charger_.tip_radius) {
          f += cover.rotation() * (charger_.contact_stiffness * (charger_.tip_radius - dist) * (d / dist));
          touching = true;
        }
      }
      // and against the body plane
      const Vec3 qp = invert(cfg_.plane_pose).apply(tip);
      if (qp.z() < charger_.tip_radius && std::abs(qp.x()) <= cfg_.plane_half_size &&
          std::abs(qp.y()) <= cfg_.plane_half_size) {
        f += cfg_.plane_pose.rotation() * Vec3(0.0, 0.0, charger_.contact_stiffness * (charger_.tip_radius - qp.z()));
        touching = true;
      }
    }
    state_.force = f;
    state_.touching = touching;
  }

  SceneConfig cfg_;
  ChargerModel charger_;
  WorldState state_;
};

/// Ray-cast depth image of plane, cover and background from `camera` (H_wc),
/// returned in the camera frame with ground-truth labels. Depth noise is
/// Gaussian along the optical axis.
inline PointCloud sample_depth_cloud(const World& world, const Pose& camera, std::uint64_t stream = 0) {
  const SceneConfig& cfg = world.config();
  const Intrinsics& in = cfg.depth_intrinsics;
  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + stream * 0xD1B54A32D192ED03ULL + 17);
  std::normal_distribution<double> noise(0.0, 1.0);

  const Pose pc = compose(invert(cfg.plane_pose), camera);  // H_pc
  const Pose cover_p = world.cover_in_plane(world.state().cover_angle);
  const Vec3 cover_n = cover_p.rotation().col(2);
  const Vec3 cover_c = cover_p.translation();
  const double cut = chord_for_area_fraction(cfg.edge_dropout) * cfg.cover_radius;

  PointCloud cloud;
  cloud.frame = FrameId::kCamera;
  const Vec3 o = pc.translation();
  for (int v = 0; v < in.height; ++v) {
    for (int u = 0; u < in.width; ++u) {
      const Vec3 dc((u + 0.5 - in.cx) / in.fx, (v + 0.5 - in.cy) / in.fy, 1.0);
      const Vec3 d = pc.rotation() * dc;
      double best = std::numeric_limits<double>::infinity();
      SurfaceLabel label = SurfaceLabel::kUnknown;
      bool dropped = false;
      // cover disc
      const double dn = d.dot(cover_n);
      if (std::abs(dn) > 1e-12) {
        const double t = (cover_c - o).dot(cover_n) / dn;
        if (t > 0.0) {
          const Vec3 q = invert(cover_p).apply(o + t * d);
          if (q.head<2>().norm() <= cfg.cover_radius) {
            best = t;
            label = SurfaceLabel::kCover;
            dropped = q.x() > cut;
          }
        }
      }
      if (std::abs(d.z()) > 1e-12) {
        const double t = -o.z() / d.z();
        const Vec3 q = o + t * d;
        if (t > 0.0 && t < best && std::abs(q.x()) <= cfg.plane_half_size && std::abs(q.y()) <= cfg.plane_half_size) {
          best = t;
          label = SurfaceLabel::kPlane;
          dropped = false;
        }
        const double tb = (-cfg.background_offset - o.z()) / d.z();
        if (tb > 0.0 && tb < best) {
          best = tb;
          label = SurfaceLabel::kBackground;
          dropped = false;
        }
      }
      if (label == SurfaceLabel::kUnknown) continue;
      const double n = noise(rng);  // drawn for every hit so dropout does not shift the stream
      if (dropped) continue;
      const Vec3 p = dc * best;  // camera frame; dc has unit z so best is the depth
      const double z = p.z();
      cloud.points.push_back(p * ((z + cfg.sigma_depth * n) / z));
      cloud.labels.push_back(label);
    }
  }
  if (cloud.empty()) fail(ErrorKind::kEmptyResult, "camera sees no scene surface");
  return cloud;
}

/// Projected port circle centres with pixel noise and oracle depth.
inline std::vector<PixelFeature> render_features(const World& world, const Pose& camera, const Intrinsics& intr,
                                                 double sigma_px, std::mt19937_64& rng) {
  if (world.config().features_occluded) fail(ErrorKind::kVisibility, "port features are occluded");
  std::normal_distribution<double> noise(0.0, 1.0);
  const Pose cw = invert(camera);
  std::vector<PixelFeature> out;
  for (const auto& p : world.feature_points_world()) {
    const Vec3 pc = cw.apply(p);
    PixelFeature f = project(pc, intr);
    const double nu = noise(rng), nv = noise(rng);
    f.u += sigma_px * nu;
    f.v += sigma_px * nv;
    if (!intr.contains(f.u, f.v)) fail(ErrorKind::kVisibility, "port feature outside the image");
    out.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Planar peg-in-hole environment

struct ContactParams {
  double k_z = 5000.0;     // N/m
  double k_xy = 3000.0;    // N/m
  double damping = 50.0;   // N·s/m
  double lever = 0.1;      // m, sensor above the peg tip
};

struct InsertionConfig {
  HoleGeometry hole{};
  ContactParams contact{};
  PiGains pi{};
  double clearance = 0.00025;
  double dt = 0.01;
  int ticks_per_step = 10;
  double step_size = 0.001;
  double workspace_half = 0.025;
  double success_depth = 0.005;
  double success_force = 1.0;
  int average_window = 5;
  int settle_ticks = 50;
  double start_height = 0.0005;

  double peg_radius() const { return hole.inradius() - clearance; }
};

enum class PlanarAction { kPlusX = 0, kMinusX = 1, kPlusY = 2, kMinusY = 3 };

inline Vec2 action_direction(PlanarAction a) {
  switch (a) {
    case PlanarAction::kPlusX: return Vec2(1, 0);
    case PlanarAction::kMinusX: return Vec2(-1, 0);
    case PlanarAction::kPlusY: return Vec2(0, 1);
    case PlanarAction::kMinusY: return Vec2(0, -1);
  }
  return Vec2::Zero();
}

inline std::string_view to_string(PlanarAction a) {
  switch (a) {
    case PlanarAction::kPlusX: return "+x";
    case PlanarAction::kMinusX: return "-x";
    case PlanarAction::kPlusY: return "+y";
    case PlanarAction::kMinusY: return "-y";
  }
  return "?";
}

struct InsertionState {
  Vec2 offset = Vec2::Zero();  // peg axis relative to the hole centre, m
  double height = 0.0;         // peg tip above the port surface, m (negative = inserted)
  double velocity = 0.0;       // d(height)/dt
  PiState pi{};
  int steps = 0;
  double time = 0.0;
  bool success = false;
  bool out_of_workspace = false;
};

/// Quasi-static penalty contact between a round peg and a shaped hole, given
/// the largest hole SDF over the peg footprint and the rim contact integral.
/// The lateral force is -(k_xy/πr)·∮ sdf⁺·n ds, applied at the rim centroid.
inline Wrench ft_reading(const HoleGeometry& hole, const ContactParams& cp, double peg_radius, const Vec2& offset,
                         const DiscExtreme& ext, const RimContact& rim_c, double height, double velocity) {
  double support;
  bool rim = false;
  if (ext.value <= 0.0) {
    support = -hole.depth();
  } else if (ext.value <= hole.chamfer()) {
    support = -(hole.chamfer() - ext.value);
    rim = true;
  } else {
    support = 0.0;
    rim = hole.sdf(offset) < peg_radius;
  }
  const double pen = support - height;
  Wrench w;
  w.frame = FrameId::kEndEffector;
  if (pen <= 0.0) return w;
  w.force.z() = cp.k_z * pen + cp.damping * std::max(0.0, -velocity);
  Vec3 arm(0.0, 0.0, -cp.lever);
  if (rim) {
    const Vec2 f = -(cp.k_xy / (kPi * peg_radius)) * rim_c.moment;
    w.force.x() = f.x();
    w.force.y() = f.y();
    arm.head<2>() = rim_c.centroid - offset;
  }
  w.torque = arm.cross(w.force);
  return w;
}

inline Wrench ft_reading(const HoleGeometry& hole, const ContactParams& cp, double peg_radius, const Vec2& offset,
                         double height, double velocity) {
  return ft_reading(hole, cp, peg_radius, offset, disc_sdf_max(hole, offset, peg_radius),
                    rim_contact(hole, offset, peg_radius), height, velocity);
}

class InsertionEnv {
 public:
  explicit InsertionEnv(const InsertionConfig& cfg = {}) : cfg_(cfg) {
    cfg_.pi.validate();
    require(cfg_.peg_radius() > 0.0, ErrorKind::kConfig, "clearance exceeds hole inradius");
    require(cfg_.dt > 0.0 && cfg_.ticks_per_step > 0 && cfg_.average_window > 0, ErrorKind::kConfig,
            "invalid insertion timing");
  }

  const InsertionConfig& config() const { return cfg_; }
  const InsertionState& state() const { return s_; }
  const Wrench& last_wrench() const { return last_; }
  double depth() const { return -s_.height; }

  /// Places the peg just above the surface at `offset` and lets the PI loop
  /// settle the contact force.
  void reset(const Vec2& offset) {
    s_ = InsertionState{};
    s_.offset = offset;
    s_.height = cfg_.start_height;
    window_.clear();
    last_ = Wrench{};
    for (int i = 0; i < cfg_.settle_ticks && !s_.success; ++i) tick();
  }

  /// One 1 mm planar move followed by a PI-regulated dwell.
  void planar_step(PlanarAction a) {
    require(!done(), ErrorKind::kInvalidArgument, "episode already finished");
    if (!in_bore()) s_.offset += cfg_.step_size * action_direction(a);
    ++s_.steps;
    if ((s_.offset.array().abs() > cfg_.workspace_half).any()) {
      s_.out_of_workspace = true;
      return;
    }
    for (int i = 0; i < cfg_.ticks_per_step && !s_.success; ++i) tick();
  }

  bool done() const { return s_.success || s_.out_of_workspace; }

  /// Window-averaged wrench, the policy observation before normalization.
  Wrench averaged_wrench() const {
    Wrench w;
    if (window_.empty()) return w;
    for (const auto& x : window_) {
      w.force += x.force;
      w.torque += x.torque;
    }
    w.force /= static_cast<double>(window_.size());
    w.torque /= static_cast<double>(window_.size());
    return w;
  }

  bool in_bore() const { return s_.height < 0.0 && extreme().value <= 0.0; }

 private:
  // the footprint extreme only changes when the peg moves sideways
  const DiscExtreme& extreme() const {
    if (!cached_ || cached_offset_ != s_.offset) {
      cached_ext_ = disc_sdf_max(cfg_.hole, s_.offset, cfg_.peg_radius());
      cached_rim_ = rim_contact(cfg_.hole, s_.offset, cfg_.peg_radius());
      cached_offset_ = s_.offset;
      cached_ = true;
    }
    return cached_ext_;
  }

  void tick() {
    // a chamfer catches the peg and guides it into the bore
    if (s_.height <= 0.0) {
      for (int k = 0; k < 4; ++k) {
        const DiscExtreme& e = extreme();
        if (e.value <= 0.0 || e.value > cfg_.hole.chamfer()) break;
        s_.offset -= (e.value + 1e-7) * cfg_.hole.gradient(e.point);
      }
    }
    const DiscExtreme& ext = extreme();
    last_ = ft_reading(cfg_.hole, cfg_.contact, cfg_.peg_radius(), s_.offset, ext, cached_rim_, s_.height, s_.velocity);
    window_.push_back(last_);
    while (static_cast<int>(window_.size()) > cfg_.average_window) window_.pop_front();
    const double dz = pi_force_z(last_.force.z(), cfg_.pi, cfg_.dt, s_.pi);
    s_.velocity = -dz / cfg_.dt;
    s_.height -= dz;
    s_.time += cfg_.dt;
    if (-s_.height >= cfg_.success_depth && std::abs(last_.force.z()) < cfg_.success_force) s_.success = true;
  }

  InsertionConfig cfg_;
  InsertionState s_;
  std::deque<Wrench> window_;
  Wrench last_;
  mutable bool cached_ = false;
  mutable Vec2 cached_offset_ = Vec2::Zero();
  mutable DiscExtreme cached_ext_;
  mutable RimContact cached_rim_;
};

}  // namespace evcharge
