#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "evcharge/control.hpp"
#include "evcharge/error.hpp"
#include "evcharge/policy.hpp"
#include "evcharge/simworld.hpp"

namespace evcharge {

enum class BenchMethod { kRandom, kSpiral, kProposed, kProposedServo };

inline std::string_view to_string(BenchMethod m) {
  switch (m) {
    case BenchMethod::kRandom: return "random";
    case BenchMethod::kSpiral: return "spiral";
    case BenchMethod::kProposed: return "proposed";
    case BenchMethod::kProposedServo: return "proposed+servo";
  }
  return "?";
}

inline BenchMethod bench_method_from_string(std::string_view s) {
  for (auto m : {BenchMethod::kRandom, BenchMethod::kSpiral, BenchMethod::kProposed, BenchMethod::kProposedServo})
    if (to_string(m) == s) return m;
  fail(ErrorKind::kConfig, "unknown bench method '" + std::string(s) + "'");
}

struct BenchConfig {
  std::vector<BenchMethod> methods{BenchMethod::kRandom, BenchMethod::kSpiral, BenchMethod::kProposed};
  int trials = 100;
  double offset_bound = 0.005;
  int budget = 100;
  double spiral_pitch = 0.001;
  double spiral_max_radius = 0.01;
  HoleShape hole = HoleShape::kCircle;
  int threads = 0;  // 0 = hardware concurrency
};

struct CoverExperimentConfig {
  std::vector<double> angles_deg{15, 30, 45, 60, 75};
  // m, along the estimated cover x axis; written as cm/100 to match the config parser
  std::vector<double> biases{0.0 / 100.0, 2.1 / 100.0, -1.3 / 100.0, -3.4 / 100.0, 0.8 / 100.0};
  int trials = 1;
};

struct AppConfig {
  SceneConfig scene{};
  PerceptionConfig perception{};
  AttemptConfig attempt{};
  double injected_bias = 0.0;  // m, added to the perceived centre along x̂ before the attempt stage
  OpenConfig open{};
  ServoConfig servo{};
  InsertionConfig insertion{};
  double hole_depth = 0.02;
  double hole_chamfer = 0.0005;
  int insert_budget = 100;
  ActMode insert_mode = ActMode::kSample;
  TrainConfig train{};
  BenchConfig bench{};
  CoverExperimentConfig cover_experiment{};
  std::string policy_path;  // resolved against the config file directory

  /// Insertion settings for a given hole shape, sized by the scene's port.
  InsertionConfig insertion_for(HoleShape shape) const {
    InsertionConfig ic = insertion;
    ic.hole = HoleGeometry(shape, scene.port_radius, hole_depth, hole_chamfer);
    return ic;
  }

  /// Derives dependent settings once all keys are applied.
  void finalize() {
    insertion = insertion_for(scene.hole);
    train.insertion = insertion;
  }

  void validate() const {
    scene.validate();
    train.validate();
    insertion.pi.validate();
    require(insert_budget >= 1, ErrorKind::kConfig, "insert budget must be positive");
    require(bench.trials >= 1 && bench.budget >= 1, ErrorKind::kConfig, "bench trials and budget must be positive");
    require(!bench.methods.empty(), ErrorKind::kConfig, "bench needs at least one method");
    require(cover_experiment.trials >= 1, ErrorKind::kConfig, "cover experiment trials must be positive");
    require(cover_experiment.biases.empty() || cover_experiment.biases.size() == cover_experiment.angles_deg.size(),
            ErrorKind::kConfig, "cover_experiment.biases_cm must match the angle list");
    require(attempt.x1 > 0.0 && attempt.speed > 0.0 && attempt.dt > 0.0, ErrorKind::kConfig, "invalid attempt settings");
    require(open.dt > 0.0 && open.timeout > 0.0, ErrorKind::kConfig, "invalid open settings");
    require(servo.dt > 0.0 && servo.gain > 0.0 && servo.timeout > 0.0, ErrorKind::kConfig, "invalid servo settings");
    require(insertion.peg_radius() > 0.0, ErrorKind::kConfig, "clearance exceeds the port radius");
  }
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& v) {
  double d = 0.0;
  const char* b = v.data();
  const char* e = v.data() + v.size();
  const auto r = std::from_chars(b, e, d);
  if (r.ec != std::errc() || r.ptr != e || !std::isfinite(d)) fail(ErrorKind::kConfig, key + ": not a number: '" + v + "'");
  return d;
}

inline long parse_long(const std::string& key, const std::string& v) {
  long x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail(ErrorKind::kConfig, key + ": not an integer: '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::kConfig, key + ": not a boolean: '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

using Setter = std::function<void(AppConfig&, const std::string& key, const std::string& value)>;

template <class F>
Setter number(F f) {
  return [f](AppConfig& c, const std::string& k, const std::string& v) { f(c) = parse_double(k, v); };
}
template <class F>
Setter integer(F f) {
  return [f](AppConfig& c, const std::string& k, const std::string& v) {
    f(c) = static_cast<std::remove_reference_t<decltype(f(c))>>(parse_long(k, v));
  };
}

inline const std::map<std::string, Setter>& config_schema() {
  static const std::map<std::string, Setter> schema = [] {
    std::map<std::string, Setter> s;
    // scene
    s["scene.cover_angle_deg"] = number([](AppConfig& c) -> double& { return c.scene.cover_angle_deg; });
    s["scene.cover_radius"] = number([](AppConfig& c) -> double& { return c.scene.cover_radius; });
    s["scene.cover_thickness"] = number([](AppConfig& c) -> double& { return c.scene.cover_thickness; });
    s["scene.port_radius"] = number([](AppConfig& c) -> double& { return c.scene.port_radius; });
    s["scene.feature_radius"] = number([](AppConfig& c) -> double& { return c.scene.feature_radius; });
    s["scene.plane_half_size"] = number([](AppConfig& c) -> double& { return c.scene.plane_half_size; });
    s["scene.background_offset"] = number([](AppConfig& c) -> double& { return c.scene.background_offset; });
    s["scene.sigma_depth"] = number([](AppConfig& c) -> double& { return c.scene.sigma_depth; });
    s["scene.edge_dropout"] = number([](AppConfig& c) -> double& { return c.scene.edge_dropout; });
    s["scene.sigma_px"] = number([](AppConfig& c) -> double& { return c.scene.sigma_px; });
    s["scene.features_occluded"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.scene.features_occluded = parse_bool(k, v);
    };
    s["scene.hole"] = [](AppConfig& c, const std::string&, const std::string& v) { c.scene.hole = hole_shape_from_string(v); };
    // perception
    s["perception.crop_half"] = number([](AppConfig& c) -> double& { return c.perception.crop_half; });
    s["perception.crop_below"] = number([](AppConfig& c) -> double& { return c.perception.crop_below; });
    s["perception.crop_above"] = number([](AppConfig& c) -> double& { return c.perception.crop_above; });
    s["perception.voxel"] = number([](AppConfig& c) -> double& { return c.perception.voxel; });
    s["perception.outlier_radius"] = number([](AppConfig& c) -> double& { return c.perception.outlier_radius; });
    s["perception.outlier_min_neighbors"] = integer([](AppConfig& c) -> int& { return c.perception.outlier_min_neighbors; });
    s["perception.normal_k"] = integer([](AppConfig& c) -> int& { return c.perception.normal_k; });
    s["perception.kmeans_restarts"] = integer([](AppConfig& c) -> int& { return c.perception.kmeans.restarts; });
    s["perception.kmeans_max_iterations"] = integer([](AppConfig& c) -> int& { return c.perception.kmeans.max_iterations; });
    s["perception.max_size_ratio"] = number([](AppConfig& c) -> double& { return c.perception.select.max_size_ratio; });
    s["perception.min_separation_score"] =
        number([](AppConfig& c) -> double& { return c.perception.select.min_separation_score; });
    // attempt
    s["attempt.x1"] = number([](AppConfig& c) -> double& { return c.attempt.x1; });
    s["attempt.speed"] = number([](AppConfig& c) -> double& { return c.attempt.speed; });
    s["attempt.dt"] = number([](AppConfig& c) -> double& { return c.attempt.dt; });
    s["attempt.force_threshold"] = number([](AppConfig& c) -> double& { return c.attempt.force_threshold; });
    s["attempt.injected_bias"] = number([](AppConfig& c) -> double& { return c.injected_bias; });
    // open
    s["open.omega_z"] = number([](AppConfig& c) -> double& { return c.open.omega_d.z(); });
    s["open.stop_force"] = number([](AppConfig& c) -> double& { return c.open.stop_force; });
    s["open.target_angle_deg"] = number([](AppConfig& c) -> double& { return c.open.target_angle_deg; });
    s["open.timeout"] = number([](AppConfig& c) -> double& { return c.open.timeout; });
    s["open.dt"] = number([](AppConfig& c) -> double& { return c.open.dt; });
    // servo
    s["servo.gain"] = number([](AppConfig& c) -> double& { return c.servo.gain; });
    s["servo.dt"] = number([](AppConfig& c) -> double& { return c.servo.dt; });
    s["servo.pixel_tolerance"] = number([](AppConfig& c) -> double& { return c.servo.pixel_tolerance; });
    s["servo.hold_ticks"] = integer([](AppConfig& c) -> int& { return c.servo.hold_ticks; });
    s["servo.timeout"] = number([](AppConfig& c) -> double& { return c.servo.timeout; });
    s["servo.standoff"] = number([](AppConfig& c) -> double& { return c.servo.standoff; });
    s["servo.max_offset"] = number([](AppConfig& c) -> double& { return c.servo.max_offset; });
    s["servo.min_distance"] = number([](AppConfig& c) -> double& { return c.servo.min_distance; });
    s["servo.max_distance"] = number([](AppConfig& c) -> double& { return c.servo.max_distance; });
    s["servo.sweep_rate"] = number([](AppConfig& c) -> double& { return c.servo.sweep_rate; });
    s["servo.sweep_step"] = number([](AppConfig& c) -> double& { return c.servo.sweep_step; });
    // insertion
    s["insertion.depth"] = number([](AppConfig& c) -> double& { return c.hole_depth; });
    s["insertion.chamfer"] = number([](AppConfig& c) -> double& { return c.hole_chamfer; });
    s["insertion.clearance"] = number([](AppConfig& c) -> double& { return c.insertion.clearance; });
    s["insertion.k_z"] = number([](AppConfig& c) -> double& { return c.insertion.contact.k_z; });
    s["insertion.k_xy"] = number([](AppConfig& c) -> double& { return c.insertion.contact.k_xy; });
    s["insertion.damping"] = number([](AppConfig& c) -> double& { return c.insertion.contact.damping; });
    s["insertion.lever"] = number([](AppConfig& c) -> double& { return c.insertion.contact.lever; });
    s["insertion.k_p"] = number([](AppConfig& c) -> double& { return c.insertion.pi.k_p; });
    s["insertion.k_i"] = number([](AppConfig& c) -> double& { return c.insertion.pi.k_i; });
    s["insertion.integral_clamp"] = number([](AppConfig& c) -> double& { return c.insertion.pi.clamp; });
    s["insertion.setpoint"] = number([](AppConfig& c) -> double& { return c.insertion.pi.setpoint; });
    s["insertion.dt"] = number([](AppConfig& c) -> double& { return c.insertion.dt; });
    s["insertion.ticks_per_step"] = integer([](AppConfig& c) -> int& { return c.insertion.ticks_per_step; });
    s["insertion.step_size"] = number([](AppConfig& c) -> double& { return c.insertion.step_size; });
    s["insertion.workspace_half"] = number([](AppConfig& c) -> double& { return c.insertion.workspace_half; });
    s["insertion.success_depth"] = number([](AppConfig& c) -> double& { return c.insertion.success_depth; });
    s["insertion.success_force"] = number([](AppConfig& c) -> double& { return c.insertion.success_force; });
    s["insertion.average_window"] = integer([](AppConfig& c) -> int& { return c.insertion.average_window; });
    s["insertion.settle_ticks"] = integer([](AppConfig& c) -> int& { return c.insertion.settle_ticks; });
    s["insertion.start_height"] = number([](AppConfig& c) -> double& { return c.insertion.start_height; });
    s["insertion.budget"] = integer([](AppConfig& c) -> int& { return c.insert_budget; });
    s["insertion.mode"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      if (v == "sample") c.insert_mode = ActMode::kSample;
      else if (v == "greedy") c.insert_mode = ActMode::kGreedy;
      else fail(ErrorKind::kConfig, k + ": expected sample or greedy");
    };
    // train
    s["train.gamma"] = number([](AppConfig& c) -> double& { return c.train.hyper.gamma; });
    s["train.learning_rate"] = number([](AppConfig& c) -> double& { return c.train.hyper.learning_rate; });
    s["train.entropy_coef"] = number([](AppConfig& c) -> double& { return c.train.hyper.entropy_coef; });
    s["train.rollout"] = integer([](AppConfig& c) -> int& { return c.train.hyper.rollout; });
    s["train.hidden"] = integer([](AppConfig& c) -> int& { return c.train.hyper.hidden; });
    s["train.max_grad_norm"] = number([](AppConfig& c) -> double& { return c.train.hyper.max_grad_norm; });
    s["train.envs_per_geometry"] = integer([](AppConfig& c) -> int& { return c.train.envs_per_geometry; });
    s["train.total_interactions"] = integer([](AppConfig& c) -> long& { return c.train.total_interactions; });
    s["train.t_max"] = integer([](AppConfig& c) -> int& { return c.train.t_max; });
    s["train.offset_bound"] = number([](AppConfig& c) -> double& { return c.train.offset_bound; });
    s["train.ma_window"] = integer([](AppConfig& c) -> int& { return c.train.ma_window; });
    s["train.geometries"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.train.geometries.clear();
      for (const auto& g : split_list(v)) c.train.geometries.push_back(hole_shape_from_string(g));
      if (c.train.geometries.empty()) fail(ErrorKind::kConfig, k + ": empty geometry list");
    };
    // bench
    s["bench.methods"] = [](AppConfig& c, const std::string&, const std::string& v) {
      c.bench.methods.clear();
      for (const auto& m : split_list(v)) c.bench.methods.push_back(bench_method_from_string(m));
    };
    s["bench.trials"] = integer([](AppConfig& c) -> int& { return c.bench.trials; });
    s["bench.offset_bound"] = number([](AppConfig& c) -> double& { return c.bench.offset_bound; });
    s["bench.budget"] = integer([](AppConfig& c) -> int& { return c.bench.budget; });
    s["bench.spiral_pitch"] = number([](AppConfig& c) -> double& { return c.bench.spiral_pitch; });
    s["bench.spiral_max_radius"] = number([](AppConfig& c) -> double& { return c.bench.spiral_max_radius; });
    s["bench.hole"] = [](AppConfig& c, const std::string&, const std::string& v) { c.bench.hole = hole_shape_from_string(v); };
    s["bench.threads"] = integer([](AppConfig& c) -> int& { return c.bench.threads; });
    // cover experiment
    s["cover_experiment.angles"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.cover_experiment.angles_deg.clear();
      for (const auto& a : split_list(v)) c.cover_experiment.angles_deg.push_back(parse_double(k, a));
    };
    s["cover_experiment.biases_cm"] = [](AppConfig& c, const std::string& k, const std::string& v) {
      c.cover_experiment.biases.clear();
      for (const auto& a : split_list(v)) c.cover_experiment.biases.push_back(parse_double(k, a) / 100.0);
    };
    s["cover_experiment.trials"] = integer([](AppConfig& c) -> int& { return c.cover_experiment.trials; });
    // pipeline
    s["pipeline.policy"] = [](AppConfig& c, const std::string&, const std::string& v) { c.policy_path = v; };
    return s;
  }();
  return schema;
}

}  // namespace detail

/// Applies one "section.key = value" assignment.
inline void set_config_value(AppConfig& cfg, const std::string& key, const std::string& value) {
  const auto& schema = detail::config_schema();
  const auto it = schema.find(key);
  if (it == schema.end()) fail(ErrorKind::kConfig, "unknown config key '" + key + "'");
  it->second(cfg, key, value);
}

inline AppConfig default_config() {
  AppConfig cfg;
  cfg.finalize();
  return cfg;
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : detail::config_schema()) keys.push_back(k);
  return keys;
}

/// Reads a sectioned INI file over the defaults. Unknown sections or keys are
/// errors so typos cannot silently fall back to defaults.
inline AppConfig load_config(const std::string& path) {
  namespace pt = boost::property_tree;
  if (!std::filesystem::exists(path)) fail(ErrorKind::kConfig, "config file not found: " + path);
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::kConfig, std::string("cannot parse config: ") + e.what());
  }
  AppConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) fail(ErrorKind::kConfig, "key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) set_config_value(cfg, section + "." + key, value.data());
  }
  cfg.finalize();
  if (!cfg.policy_path.empty() && std::filesystem::path(cfg.policy_path).is_relative()) {
    cfg.policy_path = (std::filesystem::path(path).parent_path() / cfg.policy_path).lexically_normal().string();
  }
  cfg.validate();
  return cfg;
}

}  // namespace evcharge
