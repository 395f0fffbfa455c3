#include <gtest/gtest.h>

#include <functional>

#include "evcharge/control.hpp"
#include "test_support.hpp"

using namespace evcharge;

namespace {

World make_world(double angle_deg, std::uint64_t seed = 1) {
  SceneConfig s;
  s.cover_angle_deg = angle_deg;
  s.seed = seed;
  return World(s);
}

Pose shifted(const Pose& cover, double bias) {
  return cover.with_translation(cover.translation() + bias * cover.rotation().col(0));
}

Pose true_axis(const World& w) {
  return hinge_axis_pose(w.cover_pose_world(), w.config().cover_radius, w.plane_pose().rotation());
}

ErrorKind error_kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kInvalidArgument;
}

}  // namespace

TEST(ContactDetect, ThresholdIsInclusive) {
  EXPECT_FALSE(contact_detect(Wrench{Vec3(0, 0, 2.999), Vec3::Zero(), FrameId::kWorld}));
  EXPECT_TRUE(contact_detect(Wrench{Vec3(0, 0, 3.0), Vec3::Zero(), FrameId::kWorld}));
  EXPECT_TRUE(contact_detect(Wrench{Vec3(2.4, 1.8, 0.0), Vec3::Zero(), FrameId::kWorld}));
  EXPECT_FALSE(contact_detect(Wrench{Vec3(2.4, 1.8, 0.0), Vec3::Zero(), FrameId::kWorld}, 3.01));
}

class AttemptRecovery : public ::testing::TestWithParam<double> {};

TEST_P(AttemptRecovery, CorrectsInjectedCentreError) {
  const double bias = GetParam();
  for (double angle : {30.0, 45.0, 60.0}) {
    World w = make_world(angle);
    const Pose truth = w.cover_pose_world();
    EpisodeLog log;
    const AttemptOutcome o = attempt_probe(w, shifted(truth, bias), AttemptConfig{}, log);
    EXPECT_NEAR(o.result.xe, -bias, 0.002) << angle;
    EXPECT_LT((o.corrected.translation() - truth.translation()).norm(), 0.002) << angle;
    EXPECT_EQ(o.result.xe, -(o.result.x2 - o.result.x1));
    EXPECT_FALSE(log.records.empty());
  }
}

INSTANTIATE_TEST_SUITE_P(MeasuredMagnitudes, AttemptRecovery,
                         ::testing::Values(0.021, -0.021, 0.013, -0.013, 0.034, -0.034, 0.0));

TEST(Attempt, MissingCoverExhaustsTravel) {
  World w = make_world(45.0);
  // estimate displaced along the hinge far off the cover: the probe sweeps air
  const Pose off = w.cover_pose_world().with_translation(w.cover_pose_world().translation() +
                                                         0.2 * w.hinge_direction_world());
  EpisodeLog log;
  EXPECT_EQ(error_kind_of([&] { attempt_probe(w, off, AttemptConfig{}, log); }), ErrorKind::kEstimationFailure);
}

TEST(Attempt, RejectsWrongFrames) {
  World w = make_world(45.0);
  EpisodeLog log;
  const Pose p = w.plane_pose();
  EXPECT_EQ(error_kind_of([&] { attempt_probe(w, p, AttemptConfig{}, log); }), ErrorKind::kFrameMismatch);
}

TEST(HingeAxis, TrueCoverGivesTrueHinge) {
  for (double angle : {20.0, 45.0, 80.0}) {
    const World w = make_world(angle);
    const Pose a = true_axis(w);
    EXPECT_NEAR((a.translation() - w.hinge_point_world()).norm(), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(a.rotation().col(2).dot(w.hinge_direction_world())), 1.0, 1e-12);
    EXPECT_EQ(a.to(), FrameId::kAxis);
  }
}

TEST(HingeAxis, CorrectedEstimateWithinThreeMillimetres) {
  for (double bias : {0.021, -0.013, 0.034}) {
    World w = make_world(45.0);
    EpisodeLog log;
    const AttemptOutcome o = attempt_probe(w, shifted(w.cover_pose_world(), bias), AttemptConfig{}, log);
    const Pose a = hinge_axis_pose(o.corrected, w.config().cover_radius, w.plane_pose().rotation());
    EXPECT_LT((a.translation() - w.hinge_point_world()).norm(), 0.003);
  }
}

TEST(OpeningTwist, ZeroRateIsZero) {
  const World w = make_world(45.0);
  const Twist t = opening_twist(true_axis(w), Vec3(0.1, 0.2, 0.3), Vec3::Zero());
  EXPECT_EQ(t.linear, Vec3::Zero());
  EXPECT_EQ(t.angular, Vec3::Zero());
}

TEST(OpeningTwist, PointOnAxisDoesNotTranslate) {
  const World w = make_world(45.0);
  const Pose a = true_axis(w);
  const Twist t = opening_twist(a, a.translation() + 0.07 * a.rotation().col(2));
  EXPECT_NEAR(t.linear.norm(), 0.0, 1e-15);
  EXPECT_NEAR(t.angular.norm(), 0.1, 1e-15);
}

TEST(OpeningTwist, SpeedIsRateTimesLever) {
  const World w = make_world(45.0);
  const Pose a = true_axis(w);
  const Vec3 p = a.apply(Vec3(0.04, 0.0, 0.01));
  const Twist t = opening_twist(a, p);
  EXPECT_NEAR(t.linear.norm(), 0.004, 1e-15);
  EXPECT_NEAR(t.linear.dot(p - a.translation()), 0.0, 1e-15);
}

TEST(OpeningTwist, EquivariantUnderRigidMotion) {
  std::mt19937_64 rng(51);
  const World w = make_world(45.0);
  const Pose a = true_axis(w);
  for (int i = 0; i < 20; ++i) {
    const Pose g = test_support::random_pose(rng, FrameId::kWorld, FrameId::kWorld);
    const Vec3 p = test_support::random_vec(rng, 0.2);
    const Twist t = opening_twist(a, p);
    const Twist tg = opening_twist(compose(g, a), g.apply(p));
    EXPECT_NEAR((tg.angular - g.rotation() * t.angular).norm(), 0.0, 1e-12);
    EXPECT_NEAR((tg.linear - g.rotation() * t.linear).norm(), 0.0, 1e-12);
  }
}

TEST(OpeningTwist, RejectsWrongFrames) {
  const World w = make_world(45.0);
  EXPECT_EQ(error_kind_of([&] { opening_twist(w.plane_pose(), Vec3::Zero()); }), ErrorKind::kFrameMismatch);
}

TEST(OpenCover, TrueAxisOpensEveryAngleGently) {
  for (double angle : {30.0, 45.0, 60.0, 75.0}) {
    World w = make_world(angle);
    EpisodeLog log;
    const Pose axis = true_axis(w);
    const Pose cover = w.cover_pose_world();
    const auto [rho0, ax0, ph0] = w.hinge_coordinates(cover.apply(w.latch_point_cover()));
    const OpenOutcome o = open_cover(w, cover, axis, OpenConfig{}, log);
    EXPECT_GE(rad2deg(o.final_angle), 90.0) << angle;
    EXPECT_LE(o.peak_force, 3.0) << angle;
    EXPECT_TRUE(o.monotone);
    EXPECT_FALSE(w.state().latched);
    // the tip rode the hinge circle it started on
    const auto [rho, ax, ph] = w.hinge_coordinates(w.state().ee.translation());
    EXPECT_NEAR(rho, rho0, 1e-4);
    EXPECT_NEAR(ax, ax0, 1e-4);
  }
}

TEST(OpenCover, CorrectedEstimateOpens) {
  World w = make_world(45.0);
  EpisodeLog log;
  const AttemptOutcome a = attempt_probe(w, shifted(w.cover_pose_world(), 0.021), AttemptConfig{}, log);
  const Pose axis = hinge_axis_pose(a.corrected, w.config().cover_radius, w.plane_pose().rotation());
  const OpenOutcome o = open_cover(w, a.corrected, axis, OpenConfig{}, log);
  EXPECT_GE(rad2deg(o.final_angle), 90.0);
  EXPECT_LE(o.peak_force, 3.0);
}

TEST(OpenCover, AxisFaultTripsForceLimit) {
  World w = make_world(45.0);
  EpisodeLog log;
  const Pose axis = true_axis(w);
  const Pose bad = axis.with_translation(axis.translation() + 0.01 * axis.rotation().col(0));
  EXPECT_EQ(error_kind_of([&] { open_cover(w, w.cover_pose_world(), bad, OpenConfig{}, log); }), ErrorKind::kForceLimit);
  EXPECT_FALSE(w.state().latched);
}

TEST(OpenCover, AlreadyOpenSucceedsImmediately) {
  World w = make_world(95.0);
  EpisodeLog log;
  const Pose before = w.state().ee;
  const OpenOutcome o = open_cover(w, w.cover_pose_world(), true_axis(w), OpenConfig{}, log);
  EXPECT_NEAR(rad2deg(o.final_angle), 95.0, 1e-12);
  EXPECT_EQ(o.duration, 0.0);
  EXPECT_TRUE(log.records.empty());
  EXPECT_EQ(w.state().ee.translation(), before.translation());
}

TEST(OpenCover, BadEdgeEstimateCannotHook) {
  World w = make_world(45.0);
  EpisodeLog log;
  const Pose wrong = shifted(w.cover_pose_world(), 0.02);
  EXPECT_EQ(error_kind_of([&] { open_cover(w, wrong, true_axis(w), OpenConfig{}, log); }),
            ErrorKind::kEstimationFailure);
}

TEST(CapTwist, ScalesUniformlyUnderCaps) {
  const Twist t{Vec3(1.0, 0.0, 0.0), Vec3(0.0, 0.0, 0.5), FrameId::kWorld};
  const Twist c = cap_twist(t, 0.5, 1.0);
  EXPECT_LE(c.linear.norm(), 0.5);
  EXPECT_NEAR(c.angular.z() / c.linear.x(), 0.5, 1e-12);
  const Twist small{Vec3(0.1, 0, 0), Vec3::Zero(), FrameId::kWorld};
  EXPECT_NEAR(cap_twist(small, 0.5, 1.0).linear.x(), 0.1, 1e-9);
}

TEST(Servo, AtTargetCommandsNothing) {
  const World w = make_world(95.0);
  const auto target = servo_target(w, 0.03);
  const Twist t = servo_command(target, target, w.config().rgb_intrinsics, 2.0, ServoOptions{});
  EXPECT_NEAR(t.linear.norm(), 0.0, 1e-9);
  EXPECT_NEAR(t.angular.norm(), 0.0, 1e-9);
}

TEST(Servo, StartPoseKeepsPortInView) {
  const World w = make_world(95.0);
  std::mt19937_64 rng(61);
  ServoConfig cfg;
  for (int i = 0; i < 30; ++i) {
    const Pose ee = servo_start_pose(w, cfg, rng);
    const Pose target_cam = w.camera_pose_of(w.insertion_ready_pose(cfg.standoff));
    EXPECT_LE((w.camera_pose_of(ee).translation() - target_cam.translation()).norm(), cfg.max_offset + 1e-12);
    EXPECT_NO_THROW(render_features(w, w.camera_pose_of(ee), w.config().rgb_intrinsics, 0.0, rng));
  }
}

TEST(Servo, ConvergesFromRandomStarts) {
  int converged = 0;
  const int n = 20;
  for (int i = 0; i < n; ++i) {
    World w = make_world(95.0, 100 + i);
    std::mt19937_64 rng(200 + i);
    ServoConfig cfg;
    w.move_ee(servo_start_pose(w, cfg, rng));
    EpisodeLog log;
    try {
      const ServoOutcome o = servo_search(w, cfg, rng, log);
      if (o.final_pixel_error < 2.0 && o.position_error < 0.002 && o.duration < 10.0) ++converged;
    } catch (const Error&) {
    }
  }
  EXPECT_GE(converged, n - 1);
}

TEST(Servo, OccludedFeaturesReportVisibility) {
  SceneConfig s;
  s.cover_angle_deg = 95.0;
  s.features_occluded = true;
  World w(s);
  std::mt19937_64 rng(3);
  ServoConfig cfg;
  cfg.timeout = 1.0;
  w.move_ee(w.insertion_ready_pose(0.2));
  EpisodeLog log;
  EXPECT_EQ(error_kind_of([&] { servo_search(w, cfg, rng, log); }), ErrorKind::kVisibility);
}

// Random scenes: cover angle in [30, 75] deg, σ = 1 mm, edge dropout up to
// 20 %. Normals within 3 deg and probe-corrected centres within 2 mm along
// the probe axis, each in at least 95 of 100 runs.
TEST(EndToEnd, PerceptionThenProbeOverRandomScenes) {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> angle(30.0, 75.0), dropout(0.0, 0.2);
  int normal_ok = 0, centre_ok = 0, perceived = 0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    SceneConfig s;
    s.cover_angle_deg = angle(rng);
    s.edge_dropout = dropout(rng);
    s.sigma_depth = 0.001;
    s.seed = 500 + i;
    World w(s);
    const Pose truth = w.cover_pose_world();
    try {
      const PerceptionOutput p = perceive_cover(w, PerceptionConfig{}, 900 + i);
      ++perceived;
      const double err = angle_between(p.cover_world.rotation().col(2), truth.rotation().col(2));
      normal_ok += err < deg2rad(3.0);
      EpisodeLog log;
      const AttemptOutcome a = attempt_probe(w, p.cover_world, AttemptConfig{}, log);
      const Vec3 axis = p.cover_world.rotation().col(0);
      centre_ok += std::abs((a.corrected.translation() - truth.translation()).dot(axis)) < 0.002;
    } catch (const Error&) {
    }
  }
  EXPECT_GE(normal_ok, 95) << "perceived " << perceived;
  EXPECT_GE(centre_ok, 95) << "perceived " << perceived;
}
