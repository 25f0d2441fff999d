#pragma once

#include "spinesim/episode.hpp"

#include <array>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace spinesim {

struct SplitFractions {
  double train = 0.7;
  double val = 0.2;
  double test = 0.1;

  void validate() const;
};

inline const std::array<std::string, 3> kSplitNames{"train", "val", "test"};

/// Split tag per episode index: seeded Fisher-Yates shuffle, then the first
/// round(train * n) shuffled indices go to train, the next round(val * n) to
/// val, the rest to test.
std::vector<std::string> assign_splits(std::size_t n, const SplitFractions& f, std::uint64_t seed);

struct DatasetManifest {
  std::uint64_t seed = 0;
  SplitFractions fractions;
  std::vector<std::string> episode_dirs;  // relative to root, in episode order
  std::vector<std::string> splits;
  std::size_t count(const std::string& split) const;
  nlohmann::json to_json() const;
};

/// root/<split>/episode_<NNNN>/{meta.json, actions.f32, obs/tNNN_<slot>.png}
std::filesystem::path write_episode(const std::filesystem::path& root, std::size_t index,
                                    const EpisodeRecord& rec);
EpisodeRecord read_episode(const std::filesystem::path& episode_dir, bool load_images = false);

/// Assigns splits, writes every episode and root/manifest.json.
DatasetManifest write_dataset(std::vector<EpisodeRecord> episodes, const std::filesystem::path& root,
                              const SplitFractions& fractions, std::uint64_t seed);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& root);

nlohmann::json meta_to_json(const EpisodeMeta& m);
EpisodeMeta meta_from_json(const nlohmann::json& j);

/// actions.f32 payload: little-endian float32, row-major (steps x 11).
std::vector<std::uint8_t> encode_actions(const std::vector<DeltaAction>& actions);
std::vector<DeltaAction> decode_actions(const std::vector<std::uint8_t>& bytes);

}  // namespace spinesim
