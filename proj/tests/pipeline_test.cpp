#include <gtest/gtest.h>

#include <set>

#include "evcharge/pipeline.hpp"

using namespace evcharge;

namespace {

const PolicyParams& smoke_policy() {
  static const PolicyParams p = load_policy(std::string(EVCHARGE_SOURCE_DIR) + "/data/smoke_policy.bin");
  return p;
}

}  // namespace

TEST(Pipeline, FullRunSucceedsAtFortyFiveDegrees) {
  const AppConfig cfg = default_config();
  const PipelineResult r = run_pipeline(cfg, 1, &smoke_policy());
  EXPECT_TRUE(r.success) << r.message;
  ASSERT_EQ(r.log.stages.size(), kStagePlan.size());
  for (std::size_t i = 0; i < kStagePlan.size(); ++i) {
    EXPECT_EQ(r.log.stages[i].stage, to_string(kStagePlan[i]));
    EXPECT_TRUE(r.log.stages[i].success);
    EXPECT_LE(r.log.stages[i].start_time, r.log.stages[i].end_time);
    if (i > 0) EXPECT_GE(r.log.stages[i].start_time, r.log.stages[i - 1].end_time - 1e-12);
  }
  EXPECT_GE(rad2deg(r.open->final_angle), 90.0);
  EXPECT_TRUE(r.servo->converged);
  EXPECT_TRUE(r.insert->success);
}

TEST(Pipeline, ShallowCoverFailsAtPerception) {
  AppConfig cfg = default_config();
  cfg.scene.cover_angle_deg = 15.0;
  const PipelineResult r = run_pipeline(cfg, 1, &smoke_policy());
  EXPECT_FALSE(r.success);
  ASSERT_TRUE(r.failed_stage.has_value());
  EXPECT_EQ(*r.failed_stage, Stage::kPerceiveCover);
  EXPECT_EQ(*r.error, ErrorKind::kAmbiguousCluster);
  EXPECT_EQ(r.log.stages.size(), 1u);
  EXPECT_FALSE(r.attempt.has_value());
}

TEST(Pipeline, OccludedFeaturesFailServoWithVisibility) {
  AppConfig cfg = default_config();
  cfg.scene.features_occluded = true;
  const PipelineResult r = run_pipeline(cfg, 1, &smoke_policy());
  EXPECT_FALSE(r.success);
  ASSERT_TRUE(r.failed_stage.has_value());
  EXPECT_EQ(*r.failed_stage, Stage::kServoSearch);
  EXPECT_EQ(*r.error, ErrorKind::kVisibility);
  EXPECT_TRUE(r.open.has_value());
}

TEST(Pipeline, InjectedBiasIsCorrectedBeforeOpening) {
  AppConfig cfg = default_config();
  cfg.injected_bias = 0.034;
  const PipelineResult r = run_pipeline(cfg, 2, &smoke_policy(), Stage::kOpenCover);
  EXPECT_TRUE(r.success) << r.message;
  EXPECT_NEAR(r.attempt->result.xe, -0.034, 0.002);
  EXPECT_FALSE(r.servo.has_value());
}

TEST(Pipeline, InsertWithoutPolicyIsConfigError) {
  const PipelineResult r = run_pipeline(default_config(), 1, nullptr);
  EXPECT_FALSE(r.success);
  EXPECT_EQ(*r.failed_stage, Stage::kInsert);
  EXPECT_EQ(*r.error, ErrorKind::kConfig);
}

TEST(Pipeline, SameSeedSameLog) {
  const AppConfig cfg = default_config();
  const PipelineResult a = run_pipeline(cfg, 3, &smoke_policy());
  const PipelineResult b = run_pipeline(cfg, 3, &smoke_policy());
  ASSERT_EQ(a.log.records.size(), b.log.records.size());
  for (std::size_t i = 0; i < a.log.records.size(); ++i) {
    EXPECT_EQ(a.log.records[i].time, b.log.records[i].time);
    EXPECT_EQ(a.log.records[i].pose.translation(), b.log.records[i].pose.translation());
  }
}

TEST(StageSeed, DistinctPerStage) {
  std::set<std::uint64_t> s;
  for (Stage st : kStagePlan) s.insert(stage_seed(7, st));
  EXPECT_EQ(s.size(), kStagePlan.size());
}
