#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "evcharge/config.hpp"

using namespace evcharge;

namespace {

const std::string kSource = EVCHARGE_SOURCE_DIR;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string write_temp(const std::string& name, const std::string& body) {
  const auto path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream(path) << body;
  return path;
}

ErrorKind load_error(const std::string& body) {
  const std::string path = write_temp("evcharge_config_test.ini", body);
  try {
    load_config(path);
  } catch (const Error& e) {
    std::remove(path.c_str());
    return e.kind();
  }
  std::remove(path.c_str());
  return ErrorKind::kInvalidArgument;
}

// "section.key" for every assignment line of an INI file.
std::set<std::string> ini_keys(const std::string& text) {
  std::set<std::string> keys;
  std::string section;
  std::istringstream in(text);
  std::string line;
  const std::regex sec(R"(^\[(\w+)\])"), kv(R"(^(\w+)\s*=)");
  std::smatch m;
  while (std::getline(in, line)) {
    if (std::regex_search(line, m, sec)) section = m[1];
    else if (std::regex_search(line, m, kv)) keys.insert(section + "." + std::string(m[1]));
  }
  return keys;
}

}  // namespace

TEST(Config, DefaultFileListsEverySchemaKey) {
  const auto keys = ini_keys(read_file(kSource + "/configs/default.ini"));
  for (const auto& k : config_keys()) EXPECT_TRUE(keys.count(k)) << k;
  const auto all = config_keys();
  for (const auto& k : keys) EXPECT_NE(std::find(all.begin(), all.end(), k), all.end()) << k;
}

TEST(Config, DocsCoverEverySchemaKey) {
  const std::string doc = read_file(kSource + "/docs/config.md");
  for (const auto& k : config_keys()) {
    const std::string key = k.substr(k.find('.') + 1);
    EXPECT_NE(doc.find("| " + key + " |"), std::string::npos) << k;
  }
}

TEST(Config, DefaultFileMatchesBuiltInDefaults) {
  const AppConfig a = load_config(kSource + "/configs/default.ini");
  const AppConfig b = default_config();
  EXPECT_EQ(a.scene.cover_angle_deg, b.scene.cover_angle_deg);
  EXPECT_EQ(a.scene.sigma_depth, b.scene.sigma_depth);
  EXPECT_EQ(a.perception.kmeans.restarts, b.perception.kmeans.restarts);
  EXPECT_EQ(a.attempt.x1, b.attempt.x1);
  EXPECT_EQ(a.servo.gain, b.servo.gain);
  EXPECT_EQ(a.servo.max_offset, b.servo.max_offset);
  EXPECT_EQ(a.insertion.pi.k_p, b.insertion.pi.k_p);
  EXPECT_EQ(a.train.total_interactions, b.train.total_interactions);
  EXPECT_EQ(a.train.geometries, b.train.geometries);
  EXPECT_EQ(a.bench.methods, b.bench.methods);
  EXPECT_EQ(a.cover_experiment.angles_deg, b.cover_experiment.angles_deg);
  EXPECT_EQ(a.cover_experiment.biases, b.cover_experiment.biases);
  EXPECT_EQ(a.insertion.hole.shape(), b.insertion.hole.shape());
  EXPECT_TRUE(std::filesystem::path(a.policy_path).is_absolute() ||
              std::filesystem::exists(a.policy_path));
}

TEST(Config, SmokeFileLoads) {
  const AppConfig c = load_config(kSource + "/configs/smoke.ini");
  EXPECT_EQ(c.train.geometries.size(), 2u);
  EXPECT_EQ(c.train.total_interactions, 20000);
}

TEST(Config, SetValueParsesTypes) {
  AppConfig c = default_config();
  set_config_value(c, "scene.cover_angle_deg", "30.5");
  set_config_value(c, "scene.hole", "hexagon");
  set_config_value(c, "scene.features_occluded", "true");
  set_config_value(c, "bench.methods", "spiral, proposed");
  set_config_value(c, "cover_experiment.biases_cm", "1,-2,3,0,0.5");
  c.finalize();
  EXPECT_EQ(c.scene.cover_angle_deg, 30.5);
  EXPECT_EQ(c.insertion.hole.shape(), HoleShape::kHexagon);
  EXPECT_TRUE(c.scene.features_occluded);
  EXPECT_EQ(c.bench.methods, (std::vector<BenchMethod>{BenchMethod::kSpiral, BenchMethod::kProposed}));
  EXPECT_EQ(c.cover_experiment.biases[1], -2.0 / 100.0);
}

TEST(Config, RejectsBadInput) {
  AppConfig c = default_config();
  EXPECT_THROW(set_config_value(c, "scene.nope", "1"), Error);
  EXPECT_THROW(set_config_value(c, "scene.cover_angle_deg", "abc"), Error);
  EXPECT_THROW(set_config_value(c, "scene.cover_angle_deg", "1.5x"), Error);
  EXPECT_THROW(set_config_value(c, "scene.features_occluded", "maybe"), Error);
  EXPECT_THROW(set_config_value(c, "scene.hole", "oval"), Error);
  EXPECT_EQ(load_error("[scene]\ncover_angle_deg = 45\n[bogus]\nx = 1\n"), ErrorKind::kConfig);
  EXPECT_EQ(load_error("[scene]\ncover_angle_deg = 400\n"), ErrorKind::kConfig);
  EXPECT_EQ(load_error("stray = 1\n"), ErrorKind::kConfig);
  EXPECT_EQ(load_error("[scene\n"), ErrorKind::kConfig);
  EXPECT_EQ(load_error("[cover_experiment]\nbiases_cm = 1,2\n"), ErrorKind::kConfig);
  EXPECT_THROW(load_config("/nonexistent/config.ini"), Error);
}

TEST(Config, RelativePolicyPathResolvesAgainstFile) {
  const std::string path = write_temp("evcharge_policy_path.ini", "[pipeline]\npolicy = sub/p.bin\n");
  const AppConfig c = load_config(path);
  std::remove(path.c_str());
  EXPECT_EQ(c.policy_path, (std::filesystem::temp_directory_path() / "sub/p.bin").lexically_normal().string());
}
