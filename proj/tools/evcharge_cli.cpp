#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "evcharge/bench.hpp"
#include "evcharge/config.hpp"
#include "evcharge/pipeline.hpp"
#include "evcharge/policy.hpp"

namespace fs = std::filesystem;
using namespace evcharge;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitStage = 1;
constexpr int kExitUsage = 2;

// thrown for bad invocations; maps to exit 2
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  std::string out = ".";
  std::optional<int> trials;
  std::string format = "both";
  std::string policy;
  std::vector<std::string> overrides;
};

int report_error(int code, const std::string& kind, const std::string& message,
                 const std::optional<std::string>& stage = std::nullopt) {
  ojson e{{"code", code}, {"kind", kind}};
  if (stage) e["stage"] = *stage;
  e["message"] = message;
  std::cerr << ojson{{"error", e}}.dump() << '\n';
  return code;
}

AppConfig build_config(const Common& c) {
  AppConfig cfg;
  try {
    cfg = c.config.empty() ? default_config() : load_config(c.config);
    for (const auto& kv : c.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!c.overrides.empty()) {
      cfg.finalize();
      cfg.validate();
    }
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (!c.policy.empty()) cfg.policy_path = c.policy;
  if (c.trials && *c.trials < 1) throw UsageError("--trials must be at least 1");
  return cfg;
}

PolicyParams require_policy(const AppConfig& cfg) {
  if (cfg.policy_path.empty()) throw UsageError("a policy file is required (--policy or pipeline.policy)");
  try {
    return load_policy(cfg.policy_path);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

fs::path out_dir(const Common& c) {
  fs::path p(c.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw UsageError("cannot create output directory " + c.out + ": " + ec.message());
  return p;
}

bool want_csv(const Common& c) { return c.format == "csv" || c.format == "both"; }
bool want_json(const Common& c) { return c.format == "json" || c.format == "both"; }

void write_json(const fs::path& p, const ojson& j) { write_text(p.string(), j.dump(2) + "\n"); }

// Wall-clock data lives only here so the primary outputs stay reproducible.
void write_meta(const fs::path& dir, const std::string& cmd, const Common& c,
                std::chrono::steady_clock::time_point start) {
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char stamp[32];
  const std::time_t now = std::time(nullptr);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  write_json(dir / (cmd + ".meta.json"), ojson{{"command", cmd},
                                               {"seed", c.seed},
                                               {"config", c.config},
                                               {"finished_at", stamp},
                                               {"wall_seconds", wall}});
}

ojson pose_json(const Pose& p) {
  const Vec3& t = p.translation();
  const Mat3& m = p.rotation().matrix();
  return {{"translation", {t.x(), t.y(), t.z()}},
          {"rotation", {m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0), m(2, 1), m(2, 2)}}};
}

int stage_failure(const PipelineResult& r) {
  return report_error(kExitStage, std::string(to_string(*r.error)), r.message,
                      std::string(to_string(*r.failed_stage)));
}

// ---------------------------------------------------------------------------

int cmd_perceive(const Common& c) {
  const auto start = std::chrono::steady_clock::now();
  const AppConfig cfg = build_config(c);
  const fs::path dir = out_dir(c);
  const PipelineResult r = run_pipeline(cfg, c.seed, nullptr, Stage::kAttempt);

  if (r.perception) {
    const PerceptionOutput& p = *r.perception;
    // Panels of the perception figure: raw, cropped, downsampled, filtered, normals, cover.
    const std::pair<const char*, const PointCloud*> clouds[] = {
        {"a_raw.ply", &p.raw},           {"b_cropped.ply", &p.cropped},
        {"c_downsampled.ply", &p.downsampled}, {"d_filtered.ply", &p.filtered},
        {"e_normals.ply", &p.with_normals},    {"f_cover.ply", &p.cover.cloud}};
    for (const auto& [name, cloud] : clouds)
      if (!cloud->empty()) write_ply(*cloud, (dir / name).string());
  }

  ojson j;
  j["angle_deg"] = cfg.scene.cover_angle_deg;
  j["seed"] = c.seed;
  const bool perceived = !(r.failed_stage && *r.failed_stage == Stage::kPerceiveCover);
  j["perception"] = perceived ? "ok"
                    : *r.error == ErrorKind::kAmbiguousCluster ? "ambiguous"
                                                               : "failed";
  if (perceived && r.perception) {
    const CoverEstimate& e = r.perception->estimate;
    j["estimate"] = {{"center_camera", {e.center.x(), e.center.y(), e.center.z()}},
                     {"normal_camera", {e.normal.x(), e.normal.y(), e.normal.z()}},
                     {"cluster_size", e.cluster_size},
                     {"plane_fit_angle_rad", e.plane_fit_angle},
                     {"separation_score", r.perception->cover.separation_score},
                     {"size_ratio", r.perception->cover.size_ratio},
                     {"cover_world", pose_json(r.perception->cover_world)}};
  }
  if (r.attempt) {
    j["attempt"] = {{"x1_m", r.attempt->result.x1},
                    {"x2_m", r.attempt->result.x2},
                    {"x_e_m", r.attempt->result.xe},
                    {"corrected_world", pose_json(r.attempt->corrected)}};
  }
  j["stages"] = stage_summary(r.log);
  write_json(dir / "estimate.json", j);
  write_meta(dir, "perceive", c, start);
  std::cout << "perception: " << j["perception"].get<std::string>();
  if (r.attempt) std::cout << "  x_e = " << r.attempt->result.xe * 100.0 << " cm";
  std::cout << '\n';
  return r.success ? kExitOk : stage_failure(r);
}

int cmd_cover_experiment(const Common& c, const std::vector<double>& angles) {
  const auto start = std::chrono::steady_clock::now();
  AppConfig cfg = build_config(c);
  if (!angles.empty()) {
    cfg.cover_experiment.angles_deg = angles;
    cfg.cover_experiment.biases.assign(angles.size(), 0.0);
  }
  if (c.trials) cfg.cover_experiment.trials = *c.trials;
  const fs::path dir = out_dir(c);
  const auto rows = run_cover_experiment(cfg, c.seed);
  if (want_csv(c)) write_text((dir / "cover_experiment.csv").string(), cover_csv(rows));
  if (want_json(c)) write_json(dir / "cover_experiment.json", cover_json(rows));
  write_meta(dir, "cover-experiment", c, start);
  for (const auto& r : rows) {
    std::cout << r.angle_deg << " deg  perception=" << r.perception << "  open=" << r.open;
    if (r.x_e) std::cout << "  x_e=" << *r.x_e * 100.0 << " cm (injected " << r.injected_bias * 100.0 << " cm)";
    std::cout << '\n';
  }
  return kExitOk;
}

int cmd_train(const Common& c) {
  const auto start = std::chrono::steady_clock::now();
  AppConfig cfg = build_config(c);
  const fs::path dir = out_dir(c);
  TrainReport report;
  std::optional<PolicyParams> params;
  std::optional<Error> err;
  try {
    cfg.train.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  try {
    params = a2c_train(cfg.train, c.seed, report);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDivergence) throw;
    err = e;
  }
  write_text((dir / "reward_curve.csv").string(), reward_curve_csv(report));
  write_json(dir / "train_report.json", train_report_json(report, cfg.train, c.seed));
  write_meta(dir, "train", c, start);
  if (err) return report_error(kExitStage, std::string(to_string(err->kind())), err->what(), "train");
  save_policy(*params, (dir / "policy.bin").string());
  std::cout << "episodes " << report.episode_rewards.size() << "  interactions " << report.interactions
            << "  final moving-average reward "
            << (report.moving_average.empty() ? 0.0 : report.moving_average.back()) << '\n';
  return kExitOk;
}

int cmd_bench(const Common& c, const std::vector<std::string>& methods) {
  const auto start = std::chrono::steady_clock::now();
  AppConfig cfg = build_config(c);
  if (!methods.empty()) {
    cfg.bench.methods.clear();
    try {
      for (const auto& m : methods) cfg.bench.methods.push_back(bench_method_from_string(m));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  if (c.trials) cfg.bench.trials = *c.trials;
  std::optional<PolicyParams> policy;
  for (auto m : cfg.bench.methods)
    if ((m == BenchMethod::kProposed || m == BenchMethod::kProposedServo) && !policy) policy = require_policy(cfg);
  const fs::path dir = out_dir(c);
  const BenchmarkResult res = run_benchmark(cfg, policy ? &*policy : nullptr, c.seed);
  if (want_csv(c)) {
    write_text((dir / "benchmark.csv").string(), benchmark_csv(res));
    write_text((dir / "benchmark_trials.csv").string(), trials_csv(res));
  }
  if (want_json(c)) write_json(dir / "benchmark.json", benchmark_json(res));
  write_meta(dir, "bench", c, start);
  for (const auto& r : res.rows)
    std::cout << to_string(r.method) << "  success " << r.successes << "/" << r.trials << "  mean steps "
              << r.mean_steps << "  mean time " << r.mean_time << " s\n";
  return kExitOk;
}

int cmd_servo_demo(const Common& c, bool at_target) {
  const auto start = std::chrono::steady_clock::now();
  const AppConfig cfg = build_config(c);
  const fs::path dir = out_dir(c);
  SceneConfig scene = cfg.scene;
  scene.seed = c.seed;
  World world(scene);
  std::mt19937_64 rng(stage_seed(c.seed, Stage::kServoSearch));
  const Pose ready = world.insertion_ready_pose(cfg.servo.standoff);
  world.move_ee(at_target ? ready : servo_start_pose(world, cfg.servo, rng));
  const Vec3 start_error = world.state().ee.translation() - ready.translation();

  EpisodeLog log;
  StageOutcome st{"servo_search", false, world.state().time, 0.0, {}, {}};
  ServoOutcome out;
  try {
    out = servo_search(world, cfg.servo, rng, log);
    st.success = true;
  } catch (const Error& e) {
    st.error_kind = std::string(to_string(e.kind()));
    st.message = e.what();
  }
  st.end_time = world.state().time;
  log.stages.push_back(st);

  write_jsonl(log, (dir / "servo_log.jsonl").string());
  std::string csv = csv_line({"tick", "time_s", "mean_pixel_error"});
  for (std::size_t i = 0; i < out.pixel_errors.size(); ++i)
    csv += csv_line({std::to_string(i), num(static_cast<double>(i) * cfg.servo.dt), num(out.pixel_errors[i])});
  write_text((dir / "servo_pixel_error.csv").string(), csv);
  write_json(dir / "servo_summary.json", ojson{{"seed", c.seed},
                                               {"start_offset_m", start_error.norm()},
                                               {"converged", out.converged},
                                               {"duration_s", out.duration},
                                               {"ticks", out.ticks},
                                               {"lost_ticks", out.lost_ticks},
                                               {"final_pixel_error", out.final_pixel_error},
                                               {"position_error_m", out.position_error},
                                               {"orientation_error_rad", out.orientation_error},
                                               {"stages", stage_summary(log)}});
  write_meta(dir, "servo-demo", c, start);
  if (!st.success) return report_error(kExitStage, st.error_kind, st.message, st.stage);
  std::cout << "converged in " << out.duration << " s  pixel error " << out.final_pixel_error
            << " px  position error " << out.position_error * 1000.0 << " mm\n";
  return kExitOk;
}

int cmd_full(const Common& c) {
  const auto start = std::chrono::steady_clock::now();
  const AppConfig cfg = build_config(c);
  const PolicyParams policy = require_policy(cfg);
  const fs::path dir = out_dir(c);
  const PipelineResult r = run_pipeline(cfg, c.seed, &policy);
  write_jsonl(r.log, (dir / "episode.jsonl").string());
  ojson j{{"seed", c.seed}, {"angle_deg", cfg.scene.cover_angle_deg}, {"success", r.success}};
  if (r.attempt) j["x_e_m"] = r.attempt->result.xe;
  if (r.servo) j["servo_position_error_m"] = r.servo->position_error;
  if (r.insert) j["insert_steps"] = r.insert->steps;
  j["stages"] = stage_summary(r.log);
  write_json(dir / "full_summary.json", j);
  write_meta(dir, "full", c, start);
  for (const auto& s : r.log.stages)
    std::cout << s.stage << ": " << (s.success ? "ok" : s.error_kind) << "  (" << s.start_time << " -> "
              << s.end_time << " s)\n";
  return r.success ? kExitOk : stage_failure(r);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EV charging-port vision/force pipeline simulator"};
  app.require_subcommand(1);
  Common c;
  std::vector<double> angles;
  std::vector<std::string> methods;
  bool at_target = false;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "INI config file");
    sub->add_option("--seed", c.seed, "random seed");
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--trials", c.trials, "trials per angle or method");
    sub->add_option("--format", c.format, "tabular output format")->check(CLI::IsMember({"csv", "json", "both"}));
    sub->add_option("--policy", c.policy, "policy file");
    sub->add_option("--set", c.overrides, "override a config key, section.key=value");
  };

  auto* perceive = app.add_subcommand("perceive", "perceive the cover and probe it");
  auto* cover = app.add_subcommand("cover-experiment", "perceive, probe and open the cover over several angles");
  auto* train = app.add_subcommand("train", "train the insertion policy");
  auto* bench = app.add_subcommand("bench", "peg-in-hole benchmark");
  auto* servo = app.add_subcommand("servo-demo", "visual servo from a random start");
  auto* full = app.add_subcommand("full", "complete charging run");
  for (auto* s : {perceive, cover, train, bench, servo, full}) add_common(s);
  cover->add_option("--angles", angles, "cover angles in degrees")->delimiter(',');
  bench->add_option("--methods", methods, "random,spiral,proposed,proposed+servo")->delimiter(',');
  servo->add_flag("--start-at-target", at_target, "start at the insertion-ready pose");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return report_error(kExitUsage, "usage", e.what());
  }

  try {
    if (*perceive) return cmd_perceive(c);
    if (*cover) return cmd_cover_experiment(c, angles);
    if (*train) return cmd_train(c);
    if (*bench) return cmd_bench(c, methods);
    if (*servo) return cmd_servo_demo(c, at_target);
    if (*full) return cmd_full(c);
  } catch (const UsageError& e) {
    return report_error(kExitUsage, "usage", e.what());
  } catch (const Error& e) {
    return report_error(kExitStage, std::string(to_string(e.kind())), e.what());
  } catch (const std::exception& e) {
    return report_error(kExitStage, "internal", e.what());
  }
  return kExitUsage;
}
