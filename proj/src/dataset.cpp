#include "spinesim/dataset.hpp"

#include "spinesim/error.hpp"
#include "spinesim/json_util.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace spinesim {

namespace fs = std::filesystem;
using nlohmann::json;

void SplitFractions::validate() const {
  if (!(train >= 0.0 && val >= 0.0 && test >= 0.0) || std::abs(train + val + test - 1.0) > 1e-9) {
    contract_error("invalid_fractions", "split fractions must be non-negative and sum to 1");
  }
}

std::vector<std::string> assign_splits(std::size_t n, const SplitFractions& f, std::uint64_t seed) {
  f.validate();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(SeedHasher().add(seed).add("splits").finish());
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(f.train * n)));
  const auto n_val = std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(f.val * n)));
  std::vector<std::string> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    out[order[r]] = r < n_train ? "train" : r < n_train + n_val ? "val" : "test";
  }
  return out;
}

std::size_t DatasetManifest::count(const std::string& split) const {
  return static_cast<std::size_t>(std::count(splits.begin(), splits.end(), split));
}

json DatasetManifest::to_json() const {
  json j;
  j["format"] = "spinesim-dataset";
  j["version"] = 1;
  j["seed"] = seed;
  j["fractions"] = {{"train", fractions.train}, {"val", fractions.val}, {"test", fractions.test}};
  j["total"] = episode_dirs.size();
  j["splits"] = json::object();
  for (const auto& name : kSplitNames) {
    json eps = json::array();
    for (std::size_t i = 0; i < splits.size(); ++i) {
      if (splits[i] == name) eps.push_back(episode_dirs[i]);
    }
    j["splits"][name] = {{"count", eps.size()}, {"episodes", eps}};
  }
  return j;
}

namespace {

json perturbation_json(const ViewPerturbation& p) {
  return {{"rotation_deg", to_json(p.rotation_deg)}, {"translation_cm", to_json(p.translation_cm)}};
}

ViewPerturbation perturbation_from(const json& j) {
  return {vec3_from_json(j.at("rotation_deg")), vec3_from_json(j.at("translation_cm"))};
}

json pose_json(const Pose& p) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({p.rotation(r, 0), p.rotation(r, 1), p.rotation(r, 2)});
  return {{"rotation", rows}, {"translation_mm", to_json(p.translation)}};
}

Pose pose_from(const json& j) {
  Pose p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = j.at("rotation").at(r).at(c).get<double>();
  }
  p.translation = vec3_from_json(j.at("translation_mm"));
  return p;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_error("write_failed", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) io_error("write_failed", "short write to " + path.string());
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error("missing_file", "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string zero_pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 0, '0') + s;
}

}  // namespace

json meta_to_json(const EpisodeMeta& m) {
  return {{"patient_id", m.patient_id},
          {"scenario", m.scenario_id},
          {"level", m.level},
          {"side", side_name(m.side)},
          {"seed", m.seed},
          {"init_mode", init_mode_name(m.init_mode)},
          {"view_perturbation", {{"ap", perturbation_json(m.ap_perturbation)},
                                 {"lateral", perturbation_json(m.lateral_perturbation)}}},
          {"split", m.split},
          {"length", m.length},
          {"schedule", {{"navigation", m.schedule.navigation},
                        {"orientation", m.schedule.orientation},
                        {"insertion", m.schedule.insertion}}},
          {"plan", to_json(m.plan)},
          {"initial_pose", pose_json(m.initial_pose)}};
}

EpisodeMeta meta_from_json(const json& j) {
  EpisodeMeta m;
  try {
    m.patient_id = j.at("patient_id").get<std::string>();
    m.scenario_id = j.value("scenario", std::string());
    m.level = j.at("level").get<std::string>();
    m.side = parse_side(j.at("side").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.init_mode = parse_init_mode(j.at("init_mode").get<std::string>());
    m.ap_perturbation = perturbation_from(j.at("view_perturbation").at("ap"));
    m.lateral_perturbation = perturbation_from(j.at("view_perturbation").at("lateral"));
    m.split = j.value("split", std::string());
    m.length = j.at("length").get<int>();
    const auto& s = j.at("schedule");
    m.schedule = {s.at("navigation").get<int>(), s.at("orientation").get<int>(), s.at("insertion").get<int>()};
    m.plan = trajectory_from_json(j.at("plan"));
    m.initial_pose = pose_from(j.at("initial_pose"));
  } catch (const json::exception& e) {
    contract_error("malformed_metadata", std::string("episode meta: ") + e.what());
  }
  return m;
}

std::vector<std::uint8_t> encode_actions(const std::vector<DeltaAction>& actions) {
  std::vector<std::uint8_t> out;
  out.reserve(actions.size() * DeltaAction::kSize * 4);
  for (const auto& a : actions) {
    for (float f : a.to_array()) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(u >> (8 * b)));
    }
  }
  return out;
}

std::vector<DeltaAction> decode_actions(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kRow = DeltaAction::kSize * 4;
  if (bytes.size() % kRow != 0) contract_error("size_mismatch", "actions payload is not a whole number of rows");
  std::vector<DeltaAction> out;
  for (std::size_t r = 0; r < bytes.size() / kRow; ++r) {
    std::array<float, DeltaAction::kSize> a{};
    for (int c = 0; c < DeltaAction::kSize; ++c) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[r * kRow + 4 * c + b]) << (8 * b);
      std::memcpy(&a[c], &u, 4);
    }
    out.push_back(DeltaAction::from_array(a));
  }
  return out;
}

fs::path write_episode(const fs::path& root, std::size_t index, const EpisodeRecord& rec) {
  if (rec.meta.split.empty()) contract_error("missing_split", "episode has no split assigned");
  const fs::path dir = root / rec.meta.split / ("episode_" + zero_pad(index, 4));
  fs::create_directories(dir);
  write_json_file(meta_to_json(rec.meta), dir / "meta.json");
  write_bytes(dir / "actions.f32", encode_actions(rec.actions));
  if (!rec.observations.empty()) {
    fs::create_directories(dir / "obs");
    for (std::size_t t = 0; t < rec.observations.size(); ++t) {
      for (int s = 0; s < 4; ++s) {
        const auto& png = rec.observations[t][s];
        if (!png) continue;
        const std::string name =
            "t" + zero_pad(t, 3) + "_" + std::string(slot_name(static_cast<ObservationSlot>(s))) + ".png";
        write_bytes(dir / "obs" / name, *png);
      }
    }
  }
  return dir;
}

EpisodeRecord read_episode(const fs::path& dir, bool load_images) {
  EpisodeRecord rec;
  rec.meta = meta_from_json(read_json_file(dir / "meta.json"));
  rec.actions = decode_actions(read_bytes(dir / "actions.f32"));
  if (rec.actions.empty()) contract_error("empty_episode", "episode has no actions");
  if (static_cast<int>(rec.actions.size()) != rec.meta.length) {
    contract_error("truncated_episode", "episode holds " + std::to_string(rec.actions.size()) +
                                            " actions, meta declares " + std::to_string(rec.meta.length));
  }
  if (load_images && fs::exists(dir / "obs")) {
    rec.observations.resize(rec.actions.size());
    for (std::size_t t = 0; t < rec.actions.size(); ++t) {
      for (int s = 0; s < 4; ++s) {
        const fs::path p = dir / "obs" /
                           ("t" + zero_pad(t, 3) + "_" + std::string(slot_name(static_cast<ObservationSlot>(s))) + ".png");
        if (fs::exists(p)) rec.observations[t][s] = read_bytes(p);
      }
    }
  }
  return rec;
}

void write_manifest(const DatasetManifest& m, const fs::path& root) {
  fs::create_directories(root);
  write_json_file(m.to_json(), root / "manifest.json");
}

DatasetManifest write_dataset(std::vector<EpisodeRecord> episodes, const fs::path& root,
                              const SplitFractions& fractions, std::uint64_t seed) {
  DatasetManifest m;
  m.seed = seed;
  m.fractions = fractions;
  m.splits = assign_splits(episodes.size(), fractions, seed);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    episodes[i].meta.split = m.splits[i];
    const fs::path dir = write_episode(root, i, episodes[i]);
    m.episode_dirs.push_back(fs::relative(dir, root).generic_string());
  }
  write_manifest(m, root);
  return m;
}

}  // namespace spinesim
