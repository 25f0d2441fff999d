#pragma once

#include "spinesim/scenario.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <unistd.h>

namespace testing {

// Fresh scratch directory under the system temp dir, removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("spinesim_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& p) const { return path / p; }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small corridor-vertebra scenario: cheap enough to render every step.
inline nlohmann::json small_corridor_json(double inner_radius_mm = 4.0, int image_px = 48, int crop_px = 16) {
  return {
      {"id", "corridor-small"},
      {"patient_id", "phantom-small"},
      {"seed", 11},
      {"phantom", {{"kind", "corridor-vertebra"}, {"level", "L1"}, {"voxel_mm", 2.0},
                   {"corridor_inner_radius_mm", inner_radius_mm}}},
      {"camera", {{"image_px", {image_px, image_px}}}},
      {"observation", {{"crop_px", {crop_px, crop_px}}}},
      {"planner", {{"half_extent_mm", 1.5}, {"step_mm", 0.75}}},
  };
}

inline spinesim::Scenario small_corridor(double inner_radius_mm = 4.0, int image_px = 48, int crop_px = 16) {
  return spinesim::scenario_from_json(small_corridor_json(inner_radius_mm, image_px, crop_px), ".");
}

}  // namespace testing
