#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spinesim/dataset.hpp"
#include "spinesim/error.hpp"
#include "spinesim/scenario.hpp"
#include "support.hpp"

#include <algorithm>
#include <functional>
#include <map>

using namespace spinesim;
namespace fs = std::filesystem;

namespace {

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

// Relative path -> contents, for every regular file under root.
std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = testing::slurp(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("10 episodes split 7/2/1") {
  for (std::uint64_t seed : {0u, 1u, 42u}) {
    const auto s = assign_splits(10, {}, seed);
    REQUIRE(s.size() == 10);
    CHECK(std::count(s.begin(), s.end(), "train") == 7);
    CHECK(std::count(s.begin(), s.end(), "val") == 2);
    CHECK(std::count(s.begin(), s.end(), "test") == 1);
    CHECK(assign_splits(10, {}, seed) == s);
  }
  CHECK(assign_splits(10, {}, 1) != assign_splits(10, {}, 2));
  CHECK(assign_splits(0, {}, 1).empty());
  CHECK(error_code([] { assign_splits(10, {0.5, 0.5, 0.2}, 0); }) == "invalid_fractions");
  CHECK(error_code([] { assign_splits(10, {1.2, -0.1, -0.1}, 0); }) == "invalid_fractions");
}

TEST_CASE("actions payload round trip") {
  std::vector<DeltaAction> acts(3);
  acts[0].translation_mm = {0.1f, -0.2f, 0.3f};
  acts[1].phase = Phase::Orientation;
  acts[1].rotation_deg = {1, 2, 3};
  acts[2].phase = Phase::Insertion;
  acts[2].insertion_mm = 0.5;
  acts[2].side = Side::Right;
  const auto bytes = encode_actions(acts);
  CHECK(bytes.size() == 3 * 11 * 4);
  const auto back = decode_actions(bytes);
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(back[i].to_array() == acts[i].quantized().to_array());
  auto bad = bytes;
  bad.pop_back();
  CHECK(error_code([&] { decode_actions(bad); }) == "size_mismatch");
}

TEST_CASE("identical scenario and seed give a byte-identical dataset") {
  const Scenario sc = testing::small_corridor();
  testing::TempDir dir("ds");
  const auto a = write_dataset(generate_episodes(sc, 4, InitMode::Randomized), dir / "a", sc.split, sc.seed);
  const auto b = write_dataset(generate_episodes(sc, 4, InitMode::Randomized), dir / "b", sc.split, sc.seed);
  const auto ta = tree(dir / "a"), tb = tree(dir / "b");
  CHECK(ta.size() > 4 * 200);
  CHECK(ta == tb);
  CHECK(a.episode_dirs == b.episode_dirs);
  CHECK(a.splits == b.splits);

  // A different base seed changes the episodes.
  Scenario other = sc;
  other.seed = sc.seed + 1;
  write_dataset(generate_episodes(other, 4, InitMode::Randomized), dir / "c", other.split, other.seed);
  CHECK(tree(dir / "c") != ta);
}

TEST_CASE("episodes read back what was written") {
  const Scenario sc = testing::small_corridor();
  testing::TempDir dir("ds");
  auto eps = generate_episodes(sc, 3, InitMode::Midline);
  REQUIRE(eps.size() == 3);
  // Cycles over both pedicles.
  CHECK(eps[0].meta.side != eps[1].meta.side);
  CHECK(eps[0].meta.side == eps[2].meta.side);
  CHECK(eps[0].meta.seed != eps[2].meta.seed);
  const auto originals = eps;
  const DatasetManifest m = write_dataset(std::move(eps), dir.path, sc.split, sc.seed);
  REQUIRE(m.episode_dirs.size() == 3);
  CHECK(fs::exists(dir / "manifest.json"));
  for (std::size_t i = 0; i < 3; ++i) {
    const EpisodeRecord r = read_episode(dir.path / m.episode_dirs[i], true);
    CHECK(r.meta.split == m.splits[i]);
    CHECK(r.meta.seed == originals[i].meta.seed);
    CHECK(r.meta.side == originals[i].meta.side);
    CHECK(r.meta.init_mode == InitMode::Midline);
    CHECK((r.meta.plan.entry - originals[i].meta.plan.entry).norm() == 0.0);
    CHECK((r.meta.initial_pose.rotation - originals[i].meta.initial_pose.rotation).norm() == 0.0);
    REQUIRE(r.actions.size() == 200);
    for (std::size_t k = 0; k < 200; ++k) CHECK(r.actions[k].to_array() == originals[i].actions[k].to_array());
    REQUIRE(r.observations.size() == 200);
    CHECK(r.observations[17] == originals[i].observations[17]);
  }
  CHECK(m.count("train") + m.count("val") + m.count("test") == 3);
  CHECK(error_code([&] { read_episode(dir / "nowhere"); }) == "missing_file");
}

TEST_CASE("metadata json round trip") {
  EpisodeMeta m;
  m.patient_id = "p";
  m.scenario_id = "s";
  m.level = "T12";
  m.side = Side::Right;
  m.seed = 0xfedcba9876543210ull;
  m.split = "val";
  m.ap_perturbation.rotation_deg = {1, -2, 3};
  m.lateral_perturbation.translation_cm = {0.5, -1, 2};
  m.plan = {Vec3(1, 2, 3), Vec3(0, 1, 0), 33};
  m.initial_pose.translation = {4, 5, 6};
  const EpisodeMeta back = meta_from_json(meta_to_json(m));
  CHECK(back.seed == m.seed);
  CHECK(back.side == Side::Right);
  CHECK(back.level == "T12");
  CHECK(back.ap_perturbation.rotation_deg == m.ap_perturbation.rotation_deg);
  CHECK(back.lateral_perturbation.translation_cm == m.lateral_perturbation.translation_cm);
  CHECK(back.plan.depth_mm == 33);
  CHECK(back.initial_pose.translation == m.initial_pose.translation);
  CHECK(error_code([] { meta_from_json({{"seed", "x"}}); }) == "malformed_metadata");
}

TEST_CASE("invalid episodes are refused") {
  testing::TempDir dir("ds");
  EpisodeRecord empty;
  empty.meta.split = "train";
  empty.meta.plan = {Vec3::Zero(), Vec3::UnitY(), 30};
  CHECK(error_code([&] { read_episode(write_episode(dir.path, 0, empty)); }) == "empty_episode");
  EpisodeRecord shortened = empty;
  shortened.actions.resize(199);
  CHECK(error_code([&] { read_episode(write_episode(dir.path, 1, shortened)); }) == "truncated_episode");
  EpisodeRecord nosplit;
  nosplit.actions.resize(200);
  CHECK(error_code([&] { write_episode(dir.path, 2, nosplit); }) == "missing_split");
}
