#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "handvote/cli.hpp"
#include "handvote/geometry.hpp"
#include "handvote/synth.hpp"

namespace handvote::testutil {

inline std::string make_temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("handvote_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("handvote");
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

inline CameraIntrinsics small_camera() { return {110.0, 110.0, 24.0, 24.0, 48, 48}; }

/// Deterministic rendered scene: hand16 pose, 48x48 frame.
struct Scene {
  HandModel model;
  PoseAngles angles;
  Pose pose;
  DepthFrame frame;
};

inline Scene render_scene(std::uint64_t seed, const CameraIntrinsics& cam = small_camera()) {
  Scene s;
  s.model = default_hand16();
  Rng rng(seed);
  s.angles = sample_pose(s.model, rng);
  s.pose = forward_kinematics(s.model, s.angles);
  s.frame = render_depth(s.model, s.angles, cam);
  return s;
}

/// Two-sample recursive directory comparison by bytes.
inline bool dirs_equal(const std::string& a, const std::string& b) {
  namespace fs = std::filesystem;
  std::vector<std::string> names_a, names_b;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) names_a.push_back(fs::relative(e.path(), a).string());
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) names_b.push_back(fs::relative(e.path(), b).string());
  }
  std::sort(names_a.begin(), names_a.end());
  std::sort(names_b.begin(), names_b.end());
  if (names_a != names_b) return false;
  for (const auto& name : names_a) {
    if (slurp((fs::path(a) / name).string()) != slurp((fs::path(b) / name).string())) {
      return false;
    }
  }
  return true;
}

}  // namespace handvote::testutil
