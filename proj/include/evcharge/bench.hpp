#pragma once

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "evcharge/config.hpp"
#include "evcharge/control.hpp"
#include "evcharge/pipeline.hpp"
#include "evcharge/policy.hpp"

namespace evcharge {

/// Evaluates fn(i) for i in [0, n) on a small worker pool. Results land in
/// slot i, so the output does not depend on scheduling.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t n, Fn&& fn, int threads = 0) {
  std::vector<T> out(n);
  unsigned hw = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
  hw = static_cast<unsigned>(std::min<std::size_t>(hw, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  if (hw <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < hw; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
  return out;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL ^ (b + 0x632BE59BD9B4E019ULL) * 0xBF58476D1CE4E5B9ULL ^
                    (c + 0x3C6EF372FE94F82AULL) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

// ---------------------------------------------------------------------------
// CSV helpers (RFC 4180)

/// Shortest round-trip text for a number, shared by the CSV and JSON outputs.
inline std::string num(double x) { return nlohmann::json(x).dump(); }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline std::string csv_line(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_field(fields[i]);
  }
  return line + "\r\n";
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorKind::kIo, "failed writing " + path);
}

// ---------------------------------------------------------------------------
// Peg-in-hole benchmark

struct TrialRecord {
  BenchMethod method = BenchMethod::kRandom;
  int trial = 0;
  Vec2 offset = Vec2::Zero();
  bool success = false;
  int steps = 0;
  double time = 0.0;
};

struct BenchmarkRow {
  BenchMethod method = BenchMethod::kRandom;
  double position_bound = 0.0;     // m
  double orientation_bound = 0.0;  // rad
  double success_rate = 0.0;
  int successes = 0;
  double mean_time = 0.0;          // simulated s, all trials
  double mean_steps = 0.0;         // all trials; failures count the steps they used
  int trials = 0;
  std::uint64_t seed = 0;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<TrialRecord> trials;
};

inline BenchmarkRow summarize(BenchMethod m, std::span<const TrialRecord> t, double pos_bound, double ori_bound,
                              std::uint64_t seed) {
  BenchmarkRow r;
  r.method = m;
  r.position_bound = pos_bound;
  r.orientation_bound = ori_bound;
  r.trials = static_cast<int>(t.size());
  r.seed = seed;
  double time = 0.0, steps = 0.0;
  for (const auto& x : t) {
    r.successes += x.success ? 1 : 0;
    time += x.time;
    steps += x.steps;
  }
  require(r.trials >= 1, ErrorKind::kInvalidArgument, "a benchmark row needs at least one trial");
  r.success_rate = static_cast<double>(r.successes) / r.trials;
  r.mean_time = time / r.trials;
  r.mean_steps = steps / r.trials;
  return r;
}

/// Trial i of every method starts from the same lateral offset.
inline Vec2 bench_offset(std::uint64_t seed, int trial, double bound) {
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(trial), 0xB0));
  return sample_offset(bound, rng);
}

inline TrialRecord run_bench_trial(const AppConfig& cfg, BenchMethod m, const PolicyParams* policy, std::uint64_t seed,
                                   int trial) {
  const BenchConfig& b = cfg.bench;
  InsertionEnv env(cfg.insertion_for(b.hole));
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(trial), 1 + static_cast<std::uint64_t>(m)));
  TrialRecord rec;
  rec.method = m;
  rec.trial = trial;
  rec.offset = bench_offset(seed, trial, b.offset_bound);
  InsertOutcome o;
  switch (m) {
    case BenchMethod::kRandom: o = random_search(env, rec.offset, b.budget, rng); break;
    case BenchMethod::kSpiral: o = spiral_search(env, rec.offset, b.budget, b.spiral_pitch, b.spiral_max_radius); break;
    case BenchMethod::kProposed:
      require(policy != nullptr, ErrorKind::kConfig, "the proposed method needs a policy file");
      o = policy_insert(env, *policy, rec.offset, b.budget, cfg.insert_mode, rng);
      break;
    case BenchMethod::kProposedServo: {
      require(policy != nullptr, ErrorKind::kConfig, "the proposed method needs a policy file");
      SceneConfig scene = cfg.scene;
      scene.seed = mix_seed(seed, static_cast<std::uint64_t>(trial), 0x5E);
      World world(scene);
      world.move_ee(servo_start_pose(world, cfg.servo, rng));
      EpisodeLog scratch;
      double servo_time = 0.0;
      try {
        servo_time = servo_search(world, cfg.servo, rng, scratch).duration;
      } catch (const Error&) {
        rec.time = world.state().time;
        return rec;
      }
      const Vec3 e = invert(world.plane_pose()).apply(world.state().ee.translation());
      rec.offset = Vec2(e.x(), e.y());
      o = policy_insert(env, *policy, rec.offset, b.budget, cfg.insert_mode, rng);
      o.time += servo_time;
      break;
    }
  }
  rec.success = o.success;
  rec.steps = o.steps;
  rec.time = o.time;
  return rec;
}

inline BenchmarkResult run_benchmark(const AppConfig& cfg, const PolicyParams* policy, std::uint64_t seed) {
  const BenchConfig& b = cfg.bench;
  BenchmarkResult res;
  for (BenchMethod m : b.methods) {
    const auto recs = parallel_map<TrialRecord>(
        static_cast<std::size_t>(b.trials),
        [&](std::size_t i) { return run_bench_trial(cfg, m, policy, seed, static_cast<int>(i)); }, b.threads);
    const bool servo = m == BenchMethod::kProposedServo;
    res.rows.push_back(summarize(m, recs, servo ? cfg.servo.max_offset : b.offset_bound, servo ? 2 * kPi : 0.0, seed));
    res.trials.insert(res.trials.end(), recs.begin(), recs.end());
  }
  return res;
}

inline std::string benchmark_csv(const BenchmarkResult& r) {
  std::string s = csv_line({"method", "position_bound_m", "orientation_bound_rad", "success_rate", "successes",
                            "trials", "mean_time_s", "mean_steps", "seed"});
  for (const auto& x : r.rows)
    s += csv_line({std::string(to_string(x.method)), num(x.position_bound), num(x.orientation_bound),
                   num(x.success_rate), std::to_string(x.successes), std::to_string(x.trials), num(x.mean_time),
                   num(x.mean_steps), std::to_string(x.seed)});
  return s;
}

inline std::string trials_csv(const BenchmarkResult& r) {
  std::string s = csv_line({"method", "trial", "offset_x_m", "offset_y_m", "success", "steps", "time_s"});
  for (const auto& t : r.trials)
    s += csv_line({std::string(to_string(t.method)), std::to_string(t.trial), num(t.offset.x()), num(t.offset.y()),
                   t.success ? "1" : "0", std::to_string(t.steps), num(t.time)});
  return s;
}

inline nlohmann::ordered_json benchmark_json(const BenchmarkResult& r) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& x : r.rows) {
    rows.push_back({{"method", to_string(x.method)},
                    {"position_bound_m", x.position_bound},
                    {"orientation_bound_rad", x.orientation_bound},
                    {"success_rate", x.success_rate},
                    {"successes", x.successes},
                    {"trials", x.trials},
                    {"mean_time_s", x.mean_time},
                    {"mean_steps", x.mean_steps},
                    {"seed", x.seed}});
  }
  return {{"rows", rows}};
}

// ---------------------------------------------------------------------------
// Cover-angle experiment

struct CoverExperimentRow {
  double angle_deg = 0.0;
  int trial = 0;
  std::uint64_t seed = 0;
  std::string perception;        // ok | ambiguous | failed
  double separation_score = 0.0;
  double size_ratio = 0.0;
  double injected_bias = 0.0;    // m
  std::optional<double> x_e;     // m, present iff perception ok
  std::string open;              // opened | failed | skipped
  double final_angle_deg = 0.0;
  double peak_force = 0.0;
  std::string error;             // "<stage>: <kind>" when a stage failed
};

inline CoverExperimentRow run_cover_trial(const AppConfig& base, double angle, double bias, int trial,
                                          std::uint64_t seed) {
  AppConfig cfg = base;
  cfg.scene.cover_angle_deg = angle;
  cfg.injected_bias = bias;
  CoverExperimentRow row;
  row.angle_deg = angle;
  row.trial = trial;
  row.seed = seed;
  row.injected_bias = bias;
  const PipelineResult res = run_pipeline(cfg, seed, nullptr, Stage::kOpenCover);
  const bool perceived = !(res.failed_stage && *res.failed_stage == Stage::kPerceiveCover);
  if (res.perception && perceived) {
    row.separation_score = res.perception->cover.separation_score;
    row.size_ratio = res.perception->cover.size_ratio;
  }
  if (!perceived) {
    row.perception = *res.error == ErrorKind::kAmbiguousCluster ? "ambiguous" : "failed";
    row.open = "skipped";
  } else {
    row.perception = "ok";
    if (res.attempt) row.x_e = res.attempt->result.xe;
    row.open = res.success ? "opened" : "failed";
  }
  if (res.open) {
    row.final_angle_deg = rad2deg(res.open->final_angle);
    row.peak_force = res.open->peak_force;
  }
  if (res.failed_stage) row.error = std::string(to_string(*res.failed_stage)) + ": " + std::string(to_string(*res.error));
  return row;
}

inline std::vector<CoverExperimentRow> run_cover_experiment(const AppConfig& cfg, std::uint64_t seed) {
  const auto& ce = cfg.cover_experiment;
  const std::size_t n = ce.angles_deg.size() * static_cast<std::size_t>(ce.trials);
  return parallel_map<CoverExperimentRow>(
      n,
      [&](std::size_t k) {
        const std::size_t a = k / ce.trials;
        const int t = static_cast<int>(k % ce.trials);
        const double bias = ce.biases.empty() ? 0.0 : ce.biases[a];
        return run_cover_trial(cfg, ce.angles_deg[a], bias, t, seed + static_cast<std::uint64_t>(t));
      },
      cfg.bench.threads);
}

inline std::string cover_csv(const std::vector<CoverExperimentRow>& rows) {
  std::string s = csv_line({"angle_deg", "trial", "seed", "perception", "separation_score", "size_ratio",
                            "injected_bias_m", "x_e_m", "open", "final_angle_deg", "peak_force_n", "error"});
  for (const auto& r : rows)
    s += csv_line({num(r.angle_deg), std::to_string(r.trial), std::to_string(r.seed), r.perception,
                   num(r.separation_score), num(r.size_ratio), num(r.injected_bias), r.x_e ? num(*r.x_e) : "",
                   r.open, num(r.final_angle_deg), num(r.peak_force), r.error});
  return s;
}

inline nlohmann::ordered_json cover_json(const std::vector<CoverExperimentRow>& rows) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j{{"angle_deg", r.angle_deg},
                             {"trial", r.trial},
                             {"seed", r.seed},
                             {"perception", r.perception},
                             {"separation_score", r.separation_score},
                             {"size_ratio", r.size_ratio},
                             {"injected_bias_m", r.injected_bias},
                             {"x_e_m", r.x_e ? nlohmann::ordered_json(*r.x_e) : nlohmann::ordered_json(nullptr)},
                             {"open", r.open},
                             {"final_angle_deg", r.final_angle_deg},
                             {"peak_force_n", r.peak_force},
                             {"error", r.error}};
    out.push_back(j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training report

inline std::string reward_curve_csv(const TrainReport& r) {
  std::string s = csv_line({"episode", "interactions", "reward", "moving_avg_reward"});
  for (std::size_t i = 0; i < r.episode_rewards.size(); ++i)
    s += csv_line({std::to_string(i), std::to_string(r.episode_end_interactions[i]), num(r.episode_rewards[i]),
                   num(r.moving_average[i])});
  return s;
}

inline nlohmann::ordered_json train_report_json(const TrainReport& r, const TrainConfig& cfg, std::uint64_t seed) {
  nlohmann::ordered_json geoms = nlohmann::ordered_json::array();
  for (auto g : cfg.geometries) geoms.push_back(to_string(g));
  return {{"seed", seed},
          {"geometries", geoms},
          {"environments", static_cast<int>(cfg.geometries.size()) * cfg.envs_per_geometry},
          {"interactions", r.interactions},
          {"updates", r.updates},
          {"episodes", r.episode_rewards.size()},
          {"final_moving_avg_reward", r.moving_average.empty() ? 0.0 : r.moving_average.back()},
          {"diverged", r.diverged}};
}

}  // namespace evcharge
