#pragma once

#include <json.hpp>

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "evcharge/geometry.hpp"
#include "evcharge/simworld.hpp"

namespace evcharge {

struct LogRecord {
  double time = 0.0;
  std::string phase;
  Pose pose;
  Wrench wrench;
  std::string action;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

struct StageOutcome {
  std::string stage;
  bool success = false;
  double start_time = 0.0;
  double end_time = 0.0;
  std::string error_kind;  // empty on success
  std::string message;
};

/// Time-stamped record of one run: per-step records plus per-stage outcomes.
struct EpisodeLog {
  std::vector<LogRecord> records;
  std::vector<StageOutcome> stages;

  void add(double time, std::string phase, const Pose& pose, const Wrench& wrench, std::string action = {},
           nlohmann::ordered_json extra = nlohmann::ordered_json::object()) {
    records.push_back(LogRecord{time, std::move(phase), pose, wrench, std::move(action), std::move(extra)});
  }

  bool success() const {
    if (stages.empty()) return false;
    for (const auto& s : stages)
      if (!s.success) return false;
    return true;
  }

  const StageOutcome* failed_stage() const {
    for (const auto& s : stages)
      if (!s.success) return &s;
    return nullptr;
  }
};

inline nlohmann::ordered_json to_json(const LogRecord& r) {
  nlohmann::ordered_json j;
  j["time"] = r.time;
  j["phase"] = r.phase;
  const Vec3& t = r.pose.translation();
  j["position"] = {t.x(), t.y(), t.z()};
  const Mat3& m = r.pose.rotation().matrix();
  j["rotation"] = {m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0), m(2, 1), m(2, 2)};
  j["wrench"] = {r.wrench.force.x(),  r.wrench.force.y(),  r.wrench.force.z(),
                 r.wrench.torque.x(), r.wrench.torque.y(), r.wrench.torque.z()};
  j["action"] = r.action;
  if (!r.extra.empty()) j["extra"] = r.extra;
  return j;
}

inline nlohmann::ordered_json to_json(const StageOutcome& s) {
  nlohmann::ordered_json j;
  j["stage"] = s.stage;
  j["success"] = s.success;
  j["start_time"] = s.start_time;
  j["end_time"] = s.end_time;
  if (!s.error_kind.empty()) {
    j["error"] = s.error_kind;
    j["message"] = s.message;
  }
  return j;
}

inline void write_jsonl(const EpisodeLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  for (const auto& r : log.records) out << to_json(r).dump() << '\n';
}

inline nlohmann::ordered_json stage_summary(const EpisodeLog& log) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& s : log.stages) j.push_back(to_json(s));
  return j;
}

}  // namespace evcharge
