#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "evcharge/camera.hpp"
#include "evcharge/episode_log.hpp"
#include "evcharge/geometry.hpp"
#include "evcharge/perception.hpp"
#include "evcharge/pi_controller.hpp"
#include "evcharge/point_cloud.hpp"
#include "evcharge/simworld.hpp"

namespace evcharge {

inline bool contact_detect(const Wrench& w, double threshold = 3.0) { return w.force.norm() >= threshold; }

// ---------------------------------------------------------------------------
// Cover perception stage

struct PerceptionConfig {
  double crop_half = 0.14;        // plane-frame square kept around the port
  double crop_below = -0.02;      // plane-frame z range kept
  double crop_above = 0.10;
  double voxel = 0.004;
  double outlier_radius = 0.008;
  int outlier_min_neighbors = 3;
  int normal_k = 20;
  KMeansOptions kmeans{};
  ClusterSelectOptions select{};
};

/// Every intermediate product of the perception chain, in the camera frame.
struct PerceptionOutput {
  Pose camera;        // H_wc of the depth camera
  PointCloud raw;
  PointCloud cropped;
  PointCloud downsampled;
  PointCloud filtered;
  PointCloud with_normals;
  Segmentation segmentation;
  CoverCluster cover;
  CoverEstimate estimate;
  Pose cover_world;   // H_wb estimate
};

inline Box plane_crop_box(const Pose& camera, const Pose& plane, const PerceptionConfig& cfg) {
  const Pose cp = compose(invert(camera), plane);
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int sx = -1; sx <= 1; sx += 2)
    for (int sy = -1; sy <= 1; sy += 2)
      for (double z : {cfg.crop_below, cfg.crop_above}) {
        const Vec3 p = cp.apply(Vec3(sx * cfg.crop_half, sy * cfg.crop_half, z));
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
  return Box{lo, hi};
}

/// Depth view -> crop -> voxel -> outlier filter -> normals -> 2-means on
/// normals -> cover cluster -> cover pose. Stops partway with the outputs so
/// far filled in when a step throws; the error propagates.
inline void perceive_cover(const World& world, const PerceptionConfig& cfg, std::uint64_t seed, PerceptionOutput& out) {
  out.camera = world.depth_camera_pose();
  out.raw = sample_depth_cloud(world, out.camera);
  out.cropped = crop(out.raw, plane_crop_box(out.camera, world.plane_pose(), cfg));
  out.downsampled = voxel_downsample(out.cropped, cfg.voxel);
  out.filtered = remove_isolated(out.downsampled, cfg.outlier_radius, cfg.outlier_min_neighbors);
  out.with_normals = estimate_normals(out.filtered, cfg.normal_k);
  out.segmentation = segment_by_normal_kmeans(out.with_normals, 2, seed, cfg.kmeans);
  out.cover = select_cover_cluster(out.with_normals, out.segmentation, cfg.select);
  out.estimate = cover_pose(out.cover.cloud, invert(out.camera).rotation(), world.plane_pose().rotation().col(1));
  out.cover_world = compose(out.camera, out.estimate.pose);
}

inline PerceptionOutput perceive_cover(const World& world, const PerceptionConfig& cfg, std::uint64_t seed) {
  PerceptionOutput out;
  perceive_cover(world, cfg, seed, out);
  return out;
}

// ---------------------------------------------------------------------------
// Attempt stage

struct AttemptConfig {
  double x1 = 0.05;
  double speed = 0.005;
  double dt = 0.01;
  double force_threshold = 3.0;
};

struct AttemptOutcome {
  AttemptResult result;
  Pose start;       // H_we where the probe began
  Pose corrected;   // H_wb with the centre shifted by x_e along x̂
};

/// Tip start point for the probe: beyond the free edge on the estimated cover
/// x axis, at mid-thickness.
inline Vec3 attempt_start_point(const Pose& cover_world, const World& world, double x1) {
  const SceneConfig& s = world.config();
  const double r_tip = world.charger().tip_radius;
  return cover_world.apply(Vec3(s.cover_radius + r_tip + x1, 0.0, -0.5 * s.cover_thickness));
}

inline AttemptOutcome attempt_probe(World& world, const Pose& cover_world, const AttemptConfig& cfg, EpisodeLog& log) {
  require(cover_world.from() == FrameId::kWorld && cover_world.to() == FrameId::kCover, ErrorKind::kFrameMismatch,
          "attempt expects H_wb");
  require(cfg.x1 > 0.0 && cfg.speed > 0.0, ErrorKind::kConfig, "attempt distances must be positive");
  AttemptOutcome out;
  out.start = world.state().ee.with_translation(attempt_start_point(cover_world, world, cfg.x1));
  world.move_ee(out.start);
  const Vec3 dir = -cover_world.rotation().col(0);
  const Twist v{cfg.speed * dir, Vec3::Zero(), FrameId::kWorld};
  const double budget = 2.0 * cfg.x1;
  double travelled = 0.0;
  while (!contact_detect(world.wrench(), cfg.force_threshold)) {
    if (travelled >= budget) fail(ErrorKind::kEstimationFailure, "attempt probe found no cover within its travel budget");
    world.step(v, cfg.dt);
    travelled = (world.state().ee.translation() - out.start.translation()).norm();
    log.add(world.state().time, "attempt", world.state().ee, world.wrench(), "probe");
  }
  out.result = attempt_correction(cfg.x1, travelled);
  out.corrected =
      cover_world.with_translation(cover_world.translation() + out.result.xe * cover_world.rotation().col(0));
  return out;
}

// ---------------------------------------------------------------------------
// Opening stage

/// H_wa: origin on the hinge (centre minus r_b along x̂), z along the hinge
/// (the plane y axis).
inline Pose hinge_axis_pose(const Pose& cover_world, double r_b, const Rotation& r_wp) {
  require(cover_world.to() == FrameId::kCover, ErrorKind::kFrameMismatch, "hinge axis needs a cover pose");
  const Vec3 o = cover_world.translation() - r_b * cover_world.rotation().col(0);
  return Pose(r_wp * Rotation::about_x(-kPi / 2), o, cover_world.from(), FrameId::kAxis);
}

/// End-effector twist in {O_w} that rotates the tool about the hinge axis:
/// ω = R_wa ω_d, v = ω × (T_we − o_a).
inline Twist opening_twist(const Pose& axis, const Vec3& t_we, const Vec3& omega_d = Vec3(0.0, 0.0, -0.1)) {
  require(axis.from() == FrameId::kWorld && axis.to() == FrameId::kAxis, ErrorKind::kFrameMismatch,
          "opening twist expects H_wa");
  const Vec3 w = axis.rotation() * omega_d;
  return Twist{w.cross(t_we - axis.translation()), w, FrameId::kWorld};
}

struct OpenConfig {
  Vec3 omega_d = Vec3(0.0, 0.0, -0.1);
  double stop_force = 3.0;
  double target_angle_deg = 90.0;
  double timeout = 30.0;
  double dt = 0.01;
};

struct OpenOutcome {
  double final_angle = 0.0;  // rad
  double peak_force = 0.0;
  double duration = 0.0;
  bool monotone = true;
};

/// Hooks the tip under the estimated free edge and swings it about `axis`
/// until the cover reaches the target angle.
inline OpenOutcome open_cover(World& world, const Pose& cover_world, const Pose& axis, const OpenConfig& cfg,
                              EpisodeLog& log) {
  OpenOutcome out;
  const double target = deg2rad(cfg.target_angle_deg);
  const double t0 = world.state().time;
  if (world.state().cover_angle >= target) {
    out.final_angle = world.state().cover_angle;
    return out;
  }
  world.move_ee(world.state().ee.with_translation(cover_world.apply(world.latch_point_cover())));
  if (!world.try_latch()) fail(ErrorKind::kEstimationFailure, "tip is not at the cover edge; cannot hook the cover");
  double prev = world.state().cover_angle;
  while (world.state().cover_angle < target) {
    if (world.state().time - t0 > cfg.timeout) {
      world.release();
      fail(ErrorKind::kTimeout, "cover did not reach the target angle in time");
    }
    world.step(opening_twist(axis, world.state().ee.translation(), cfg.omega_d), cfg.dt);
    const double f = world.wrench().force.norm();
    out.peak_force = std::max(out.peak_force, f);
    if (world.state().cover_angle < prev) out.monotone = false;
    prev = world.state().cover_angle;
    log.add(world.state().time, "open_cover", world.state().ee, world.wrench(), "swing",
            {{"cover_angle_deg", rad2deg(world.state().cover_angle)}});
    if (f > cfg.stop_force) {
      world.release();
      fail(ErrorKind::kForceLimit, "contact force exceeded the limit while opening");
    }
  }
  world.release();
  out.final_angle = world.state().cover_angle;
  out.duration = world.state().time - t0;
  return out;
}

// ---------------------------------------------------------------------------
// Visual servo stage

struct ServoConfig {
  double gain = 2.0;
  double dt = 0.01;
  double pixel_tolerance = 1.0;
  int hold_ticks = 20;
  double timeout = 10.0;
  double standoff = 0.03;
  double max_offset = 0.3;      // start position error bound
  double min_distance = 0.1;    // camera to plane, for sampled starts
  double max_distance = 0.5;
  double sweep_rate = 0.5;      // rad/s yaw while searching
  double sweep_step = 0.4;      // amplitude growth per sweep reversal, rad
  ServoOptions solver{};
};

struct ServoOutcome {
  bool converged = false;
  double duration = 0.0;
  int ticks = 0;
  int lost_ticks = 0;
  double final_pixel_error = 0.0;
  double position_error = 0.0;     // m, end-effector vs insertion-ready pose
  double orientation_error = 0.0;  // rad
  std::vector<double> pixel_errors;
};

/// Feature pattern the camera should see when the end effector sits at the
/// insertion-ready pose.
inline std::vector<PixelFeature> servo_target(const World& world, double standoff) {
  const Pose cam = world.camera_pose_of(world.insertion_ready_pose(standoff));
  std::vector<PixelFeature> out;
  const Pose cw = invert(cam);
  for (const auto& p : world.feature_points_world()) out.push_back(project(cw.apply(p), world.config().rgb_intrinsics));
  return out;
}

/// Random end-effector start: camera displaced up to `max_offset` from its
/// target position, looking at the port with an arbitrary roll.
inline Pose servo_start_pose(const World& world, const ServoConfig& cfg, std::mt19937_64& rng) {
  const Pose target_cam = world.camera_pose_of(world.insertion_ready_pose(cfg.standoff));
  const Pose& plane = world.plane_pose();
  const Pose ec(Rotation::identity(), world.charger().camera_offset, FrameId::kEndEffector, FrameId::kCamera);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> roll(-kPi, kPi);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Vec3 d(unit(rng), unit(rng), unit(rng));
    if (d.squaredNorm() > 1.0) continue;
    const Vec3 eye = target_cam.translation() + cfg.max_offset * d;
    const double dist = invert(plane).apply(eye).z();
    if (dist < cfg.min_distance || dist > cfg.max_distance) continue;
    const Rotation look = look_at(eye, plane.translation(), plane.rotation().col(1));
    const Rotation r = look * Rotation::about_z(roll(rng));
    const Pose cam(r, eye, FrameId::kWorld, FrameId::kCamera);
    const Pose cw = invert(cam);
    bool visible = true;
    for (const auto& p : world.feature_points_world()) {
      const Vec3 pc = cw.apply(p);
      if (pc.z() <= 1e-3) {
        visible = false;
        break;
      }
      const PixelFeature f = project(pc, world.config().rgb_intrinsics);
      if (!world.config().rgb_intrinsics.contains(f.u, f.v)) visible = false;
    }
    if (!visible) continue;
    return compose(cam, invert(ec));
  }
  fail(ErrorKind::kDegenerateGeometry, "could not sample a servo start with the port in view");
}

/// Uniform scaling so both parts respect the charger's speed caps.
inline Twist cap_twist(const Twist& t, double max_linear, double max_angular) {
  double s = 1.0;
  const double lin = t.linear.norm();
  const double ang = t.angular.norm();
  if (lin > max_linear) s = std::min(s, max_linear / lin);
  if (ang > max_angular) s = std::min(s, max_angular / ang);
  return t.scaled(s * (1.0 - 1e-9));
}

/// Roll-decoupled IBVS: the in-image rotation between current and target
/// patterns is removed by a direct roll term, and the interaction-matrix law
/// handles the remaining error against the rotated target.
inline Twist servo_command(std::span<const PixelFeature> current, std::span<const PixelFeature> target,
                           const Intrinsics& intr, double gain, const ServoOptions& opts) {
  const double theta = image_rotation(current, target);
  const std::vector<PixelFeature> rotated = rotate_pattern(target, theta);
  Twist tw = servo_twist(current, rotated, intr, gain, opts);
  tw.angular.z() += gain * theta;
  return tw;
}

inline ServoOutcome servo_search(World& world, const ServoConfig& cfg, std::mt19937_64& rng, EpisodeLog& log) {
  require(cfg.gain > 0.0 && cfg.timeout > 0.0 && cfg.hold_ticks >= 1, ErrorKind::kConfig, "invalid servo settings");
  const Intrinsics& intr = world.config().rgb_intrinsics;
  const std::vector<PixelFeature> target = servo_target(world, cfg.standoff);
  const ChargerModel& ch = world.charger();
  const Rotation r_ec = Rotation::identity();
  ServoOutcome out;
  const double t0 = world.state().time;
  int held = 0;
  bool ever_seen = false;
  double sweep_angle = 0.0;
  double sweep_amp = cfg.sweep_step;
  double sweep_dir = 1.0;
  while (true) {
    const double elapsed = world.state().time - t0;
    if (elapsed > cfg.timeout + 1e-9) {
      out.duration = elapsed;
      if (!ever_seen) fail(ErrorKind::kVisibility, "port features never came into view");
      fail(ErrorKind::kTimeout, "visual servo did not converge in time");
    }
    const Pose& ee = world.state().ee;
    const Pose cam = world.camera_pose_of(ee);
    std::vector<PixelFeature> current;
    bool visible = true;
    try {
      current = render_features(world, cam, intr, world.config().sigma_px, rng);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kVisibility) throw;
      visible = false;
    }

    Twist cmd_cam;
    if (visible) {
      ever_seen = true;
      const double err = mean_pixel_error(current, target);
      out.pixel_errors.push_back(err);
      out.final_pixel_error = err;
      held = err < cfg.pixel_tolerance ? held + 1 : 0;
      log.add(world.state().time, "servo_search", ee, world.wrench(), "servo", {{"pixel_error", err}});
      if (held >= cfg.hold_ticks) break;
      cmd_cam = servo_command(current, target, intr, cfg.gain, cfg.solver);
    } else {
      ++out.lost_ticks;
      held = 0;
      // yaw sweep of growing amplitude about the camera's vertical axis
      if (std::abs(sweep_angle) >= sweep_amp) {
        sweep_dir = -sweep_dir;
        sweep_amp += cfg.sweep_step;
      }
      sweep_angle += sweep_dir * cfg.sweep_rate * cfg.dt;
      cmd_cam = Twist{Vec3::Zero(), Vec3(0.0, sweep_dir * cfg.sweep_rate, 0.0), FrameId::kCurrentCamera};
      log.add(world.state().time, "servo_search", ee, world.wrench(), "yaw_sweep");
    }
    Twist w = camera_twist_to_ee(cmd_cam, ee.rotation(), r_ec);
    // camera-origin velocity -> end-effector-origin velocity
    w = shift_twist_reference(w, ee.translation() - cam.translation());
    world.step(cap_twist(w, ch.max_linear, ch.max_angular), cfg.dt);
    ++out.ticks;
  }
  out.converged = true;
  out.duration = world.state().time - t0;
  const Pose ready = world.insertion_ready_pose(cfg.standoff);
  out.position_error = (world.state().ee.translation() - ready.translation()).norm();
  out.orientation_error = world.state().ee.rotation().angle_to(ready.rotation());
  return out;
}

}  // namespace evcharge
