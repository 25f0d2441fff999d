// Acceptance suite: one PASS/FAIL line per primary criterion. Tolerances and
// runtime limits are pinned here; the exit status is non-zero if any fails.

#include "spinesim/dataset.hpp"
#include "spinesim/drr.hpp"
#include "spinesim/error.hpp"
#include "spinesim/phantom.hpp"
#include "spinesim/planner.hpp"
#include "spinesim/protocol.hpp"
#include "spinesim/rng.hpp"
#include "spinesim/safety.hpp"
#include "spinesim/scenario.hpp"
#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

using namespace spinesim;
namespace fs = std::filesystem;

namespace {

const fs::path kGolden = SPINESIM_GOLDEN_DIR;
const fs::path kScenarios = SPINESIM_SCENARIO_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > limit_s) {
    o.pass = false;
    o.detail += "; over the runtime limit";
  }
  if (!o.pass) ++failures;
  std::printf("%s  %-28s %s (%.1f s, limit %.0f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs,
              limit_s);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

Outcome drr_oracle() {
  PhantomSpec s;
  s.kind = PhantomKind::Box;
  s.box_size_mm = {100, 100, 100};
  s.attenuation_per_mm = 0.02;
  const VoxelVolume box = build_phantom(s).volume;
  CameraConfig cam;
  cam.image_px = {33, 33};
  const CameraView view = make_view(Vec3::UnitY(), Vec3::Zero(), cam);
  const double base = render(box, view, std::nullopt).line_integral[16 * 33 + 16];
  RenderOptions fine;
  fine.step_fraction = RenderOptions{}.step_fraction / 2;
  const double halved = render(box, view, std::nullopt, ViewTag::AP, fine).line_integral[16 * 33 + 16];
  const double err = std::abs(base - 2.0) / 2.0;
  const double change = std::abs(halved - base) / base;
  return {err < 0.01 && change < 0.005,
          fmt("central ray %.5f (error %.3f%%, tol 1%%), step halving changes it by %.4f%% (tol 0.5%%)", base,
              100 * err, 100 * change)};
}

Outcome grade_thresholds() {
  PhantomSpec s;
  s.kind = PhantomKind::Box;
  s.box_size_mm = {100, 100, 100};
  s.voxel_mm = 5.0;
  const VertebraMesh box = build_phantom(s).mesh;
  const std::pair<double, char> cases[] = {{0.0, 'A'}, {1.5, 'B'}, {3.0, 'C'}, {5.0, 'D'},
                                           {7.0, 'E'}, {2.0, 'B'}, {4.0, 'C'}, {6.0, 'D'}};
  bool ok = true;
  std::string got;
  for (const auto& [p, want] : cases) {
    // Orthogonal entry through x = -50, tip p mm beyond the far face x = +50.
    const Trajectory t{Vec3(-60, 0, 0), Vec3::UnitX(), 110.0 + p};
    const char g = grade_letter(assess_cannula(box, t, 1.0).grade);
    ok &= g == want;
    got += fmt("%.1f", p) + "->" + g + " ";
  }
  return {ok, "penetrations " + got + "(expected A B C D E B C D)"};
}

Outcome filter_threshold() {
  const auto phantom = [](double r) {
    PhantomSpec s;
    s.kind = PhantomKind::CorridorVertebra;
    s.corridor_inner_radius_mm = r;
    return build_phantom(s);
  };
  const PhantomBundle narrow = phantom(0.9);
  int narrow_survivors = 0;
  for (const auto& a : narrow.annotations.entries) {
    for (const auto& c : filter_and_select(generate_candidates(a), narrow.mesh).audit) narrow_survivors += c.survived;
  }
  const PhantomBundle wide = phantom(4.0);
  double worst = 0.0;
  bool all_selected = true;
  for (const auto& a : wide.annotations.entries) {
    // From the annotation itself and from one pushed off the centerline.
    PedicleAnnotation shifted = a;
    const Mat3 f = frame_from_z(a.axis);
    shifted.entry += 1.5 * f.col(0) - 0.75 * f.col(1);
    for (const auto& start : {a, shifted}) {
      const auto sel = filter_and_select(generate_candidates(start), wide.mesh);
      if (!sel.selected) {
        all_selected = false;
        continue;
      }
      const Vec3 w = sel.trajectory()->entry - a.entry;
      worst = std::max(worst, (w - w.dot(a.axis) * a.axis).norm());
    }
  }
  return {narrow_survivors == 0 && all_selected && worst <= 0.5,
          fmt("r=0.9 mm: %.0f survivors (want 0); r=4 mm: selected entry %.3f mm from the centerline (tol 0.5)",
              narrow_survivors, worst)};
}

Outcome expert_replay() {
  const Scenario sc = load_scenario(kScenarios / "corridor.json");
  testing::TempDir dir("acc_replay");
  const auto manifest = write_dataset(generate_episodes(sc, 50, InitMode::Randomized, false), dir.path, sc.split, sc.seed);
  double worst_mm = 0.0, worst_deg = 0.0, worst_depth = 0.0;
  int grade_a = 0, n = 0;
  for (const auto& rel : manifest.episode_dirs) {
    const EpisodeRecord rec = read_episode(dir.path / rel);
    const Trajectory& plan = rec.meta.plan;
    SceneState s;
    s.pose = rec.meta.initial_pose;
    s.cannula_length_mm = sc.cannula_length_mm;
    const SceneState end = replay(s, rec.actions);
    worst_mm = std::max(worst_mm, (end.pose.translation - plan.entry).norm());
    worst_deg = std::max(worst_deg, angle_between_deg(end.pose.axis_z(), plan.direction));
    worst_depth = std::max(worst_depth, std::abs(end.insertion_mm - plan.depth_mm));
    grade_a += assess_cannula(*sc.mesh, end.trajectory(), sc.cannula_radius_mm).grade == Grade::A;
    ++n;
  }
  const bool ok = n == 50 && worst_mm <= 0.1 && worst_deg <= 0.1 && worst_depth <= 0.1 && grade_a == n;
  return {ok, fmt("%.0f episodes x 200 steps: worst entry %.2e mm, axis %.2e deg, depth %.2e mm (tol 0.1); ", n,
                  worst_mm, worst_deg, worst_depth) +
                  fmt("%.0f/%.0f grade A", grade_a, n)};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = testing::slurp(e.path());
  }
  return out;
}

Outcome dataset_determinism() {
  const Scenario sc = load_scenario(kGolden / "scenario.json");
  testing::TempDir dir("acc_ds");
  const auto a = write_dataset(generate_episodes(sc, 10, InitMode::Randomized), dir / "a", sc.split, sc.seed);
  const auto b = write_dataset(generate_episodes(sc, 10, InitMode::Randomized), dir / "b", sc.split, sc.seed);
  const auto ta = tree(dir / "a"), tb = tree(dir / "b");
  const bool same = ta == tb;
  const std::size_t tr = a.count("train"), va = a.count("val"), te = a.count("test");
  return {same && ta.size() > 10 && tr == 7 && va == 2 && te == 1,
          fmt("%.0f files, byte-identical: ", ta.size()) + (same ? "yes" : "no") +
              fmt("; split %.0f/%.0f/%.0f (want 7/2/1)", tr, va, te)};
}

Outcome metrics_oracles() {
  const VertebraMesh box = make_box_mesh(Vec3::Zero(), Vec3(40, 40, 40));
  const Trajectory ref{Vec3(0, -30, 0), Vec3::UnitY(), 30};
  const double same_d = entry_point_distance(ref, ref, box), same_a = angular_offset(ref, ref);
  const Trajectory par{Vec3(3, -30, 0), Vec3::UnitY(), 30};
  const double d3 = entry_point_distance(par, ref, box);
  const Mat3 r = Eigen::AngleAxisd(deg_to_rad(3.53), Vec3(1, 0, 2).normalized()).toRotationMatrix();
  const double a = angular_offset({ref.entry, r * ref.direction, 30}, ref);
  const bool ok = same_d == 0.0 && same_a == 0.0 && std::abs(d3 - 3.0) <= 1e-3 && std::abs(a - 3.53) <= 1e-6;
  return {ok, fmt("identical %.3g mm / %.3g deg; 3 mm offset -> %.6f mm (tol 1e-3); ", same_d, same_a, d3) +
                  fmt("3.53 deg rotation -> %.9f deg (tol 1e-6)", a)};
}

Outcome golden_transcripts() {
  const Scenario sc = load_scenario(kGolden / "scenario.json");
  const RolloutService service({sc});
  RolloutServer server(service, 0);
  server.start();
  std::ostringstream detail;
  bool ok = true;
  int frames = 0, mismatched = 0;
  for (const std::string name : {"expert", "errors"}) {
    const auto requests = split_frames(testing::slurp(kGolden / (name + ".requests")));
    const auto replies = split_frames(testing::slurp(kGolden / (name + ".replies")));
    if (requests.empty() || requests.size() != replies.size()) {
      ok = false;
      detail << name << " transcript is missing or uneven; ";
      continue;
    }
    RolloutClient client("127.0.0.1", server.port());
    for (std::size_t i = 0; i < requests.size(); ++i) {
      mismatched += client.request(std::string_view(requests[i])) != replies[i];
      ++frames;
      if (name != "expert" || i != 1) continue;
      // Mid-session, other connections send garbage.
      RolloutClient bad("127.0.0.1", server.port());
      const auto garbage = nlohmann::json::parse(bad.request(std::string_view("{]")));
      bad.send_raw(std::string("\xff\xff\xff\xff", 4));
      const auto too_large = nlohmann::json::parse(bad.read_frame());
      bool closed = false;
      try {
        bad.read_frame();
      } catch (const Error&) {
        closed = true;
      }
      {
        RolloutClient cut("127.0.0.1", server.port());
        cut.send_raw(std::string("\x00\x00\x00\x10{\"ty", 8));
      }
      const bool typed = garbage["code"] == "malformed_message" && too_large["code"] == "frame_too_large" && closed;
      ok &= typed;
      detail << "malformed frames answered with typed errors: " << (typed ? "yes" : "no") << "; ";
    }
  }
  server.stop();
  ok &= mismatched == 0 && frames > 0;
  detail << frames << " golden frames replayed, " << mismatched << " mismatched";
  return {ok, detail.str()};
}

Outcome view_perturbation() {
  CameraConfig cam;
  const CameraView v = make_view(Vec3::UnitY(), Vec3::Zero(), cam);
  Rng rng(2024);
  int inside = 0;
  double max_rot = 0.0, max_tr = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const ViewPerturbation p = sample_perturbation(rng);
    max_rot = std::max(max_rot, p.rotation_deg.cwiseAbs().maxCoeff());
    max_tr = std::max(max_tr, p.translation_cm.cwiseAbs().maxCoeff());
    inside += p.rotation_deg.cwiseAbs().maxCoeff() <= 5.0 && p.translation_cm.cwiseAbs().maxCoeff() <= 2.5;
  }
  const CameraView same = perturb_view(v, {});
  const bool identity = same.source == v.source && same.detector_center == v.detector_center &&
                        same.axis_u == v.axis_u && same.axis_v == v.axis_v && same.principal == v.principal;
  return {inside == 10000 && identity,
          fmt("%.0f/10000 within bounds (max |rot| %.4f deg <= 5, max |t| %.4f cm <= 2.5); ", inside, max_rot, max_tr) +
              "zero perturbation is the identity: " + (identity ? "yes" : "no")};
}

}  // namespace

int main() {
  run("drr-analytic-oracle", 10, drr_oracle);
  run("grade-thresholds", 30, grade_thresholds);
  run("filter-threshold", 60, filter_threshold);
  run("expert-episode-replay", 300, expert_replay);
  run("dataset-determinism-split", 300, dataset_determinism);
  run("metrics-oracles", 60, metrics_oracles);
  run("protocol-golden-transcripts", 60, golden_transcripts);
  run("view-perturbation-bounds", 60, view_perturbation);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
