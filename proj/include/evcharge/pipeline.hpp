#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "evcharge/config.hpp"
#include "evcharge/control.hpp"
#include "evcharge/episode_log.hpp"
#include "evcharge/policy.hpp"
#include "evcharge/simworld.hpp"

namespace evcharge {

enum class Stage { kPerceiveCover, kAttempt, kOpenCover, kServoSearch, kInsert };

inline constexpr std::array<Stage, 5> kStagePlan = {Stage::kPerceiveCover, Stage::kAttempt, Stage::kOpenCover,
                                                    Stage::kServoSearch, Stage::kInsert};

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kPerceiveCover: return "perceive_cover";
    case Stage::kAttempt: return "attempt";
    case Stage::kOpenCover: return "open_cover";
    case Stage::kServoSearch: return "servo_search";
    case Stage::kInsert: return "insert";
  }
  return "?";
}

/// Independent random streams per stage, derived from the run seed.
inline std::uint64_t stage_seed(std::uint64_t seed, Stage s) {
  return seed * 0x9E3779B97F4A7C15ULL + (static_cast<std::uint64_t>(s) + 1) * 0xBF58476D1CE4E5B9ULL;
}

struct PipelineResult {
  EpisodeLog log;
  std::optional<PerceptionOutput> perception;
  std::optional<AttemptOutcome> attempt;
  std::optional<OpenOutcome> open;
  std::optional<ServoOutcome> servo;
  std::optional<InsertOutcome> insert;
  bool success = false;
  std::optional<Stage> failed_stage;
  std::optional<ErrorKind> error;
  std::string message;
};

/// Runs the stages in order up to and including `last`. A stage error ends
/// the run; the result records which stage failed and why.
inline PipelineResult run_pipeline(const AppConfig& cfg, std::uint64_t seed, const PolicyParams* policy,
                                   Stage last = Stage::kInsert) {
  PipelineResult res;
  SceneConfig scene = cfg.scene;
  scene.seed = seed;
  World world(scene);
  Pose cover_est;
  Pose cover_corrected;

  const auto run_stage = [&](Stage st, auto&& body) -> bool {
    StageOutcome out;
    out.stage = std::string(to_string(st));
    out.start_time = world.state().time;
    try {
      body();
      out.success = true;
    } catch (const Error& e) {
      out.error_kind = std::string(to_string(e.kind()));
      out.message = e.what();
      res.failed_stage = st;
      res.error = e.kind();
      res.message = e.what();
    }
    out.end_time = world.state().time;
    if (st == Stage::kInsert && res.insert) out.end_time = out.start_time + res.insert->time;
    res.log.stages.push_back(out);
    return out.success;
  };

  const auto body = [&](Stage st) {
    switch (st) {
      case Stage::kPerceiveCover: {
        res.perception.emplace();
        perceive_cover(world, cfg.perception, stage_seed(seed, st), *res.perception);
        cover_est = res.perception->cover_world;
        if (cfg.injected_bias != 0.0)
          cover_est = cover_est.with_translation(cover_est.translation() +
                                                 cfg.injected_bias * cover_est.rotation().col(0));
        res.log.add(world.state().time, "perceive_cover", world.state().ee, world.wrench(), "estimate",
                    {{"cluster_size", res.perception->estimate.cluster_size},
                     {"separation_score", res.perception->cover.separation_score},
                     {"size_ratio", res.perception->cover.size_ratio}});
        break;
      }
      case Stage::kAttempt:
        res.attempt = attempt_probe(world, cover_est, cfg.attempt, res.log);
        cover_corrected = res.attempt->corrected;
        break;
      case Stage::kOpenCover: {
        const Pose axis = hinge_axis_pose(cover_corrected, scene.cover_radius, scene.plane_pose.rotation());
        res.open = open_cover(world, cover_corrected, axis, cfg.open, res.log);
        break;
      }
      case Stage::kServoSearch: {
        std::mt19937_64 rng(stage_seed(seed, st));
        world.move_ee(servo_start_pose(world, cfg.servo, rng));
        res.servo = servo_search(world, cfg.servo, rng, res.log);
        break;
      }
      case Stage::kInsert: {
        require(policy != nullptr, ErrorKind::kConfig, "insert stage needs a policy");
        // lateral error of the tool against the port, in port coordinates
        const Vec3 e = invert(world.plane_pose()).apply(world.state().ee.translation());
        InsertionEnv env(cfg.insertion);
        std::mt19937_64 rng(stage_seed(seed, st));
        const std::size_t first = res.log.records.size();
        res.insert = policy_insert(env, *policy, Vec2(e.x(), e.y()), cfg.insert_budget, cfg.insert_mode, rng, &res.log);
        for (std::size_t i = first; i < res.log.records.size(); ++i) res.log.records[i].time += world.state().time;
        if (!res.insert->success) fail(ErrorKind::kTimeout, "insertion did not succeed within the step budget");
        break;
      }
    }
  };

  for (Stage st : kStagePlan) {
    if (!run_stage(st, [&] { body(st); })) return res;
    if (st == last) break;
  }
  res.success = true;
  return res;
}

}  // namespace evcharge
