// spinesim: batch entry points for the cannula insertion sandbox.
//
// Exit codes: 0 ok, 1 contract violation (bad input, bad config), 2 I/O.
// Failures print one JSON line {"error": {...}} on stderr.

#include "spinesim/dataset.hpp"
#include "spinesim/drr.hpp"
#include "spinesim/error.hpp"
#include "spinesim/image_io.hpp"
#include "spinesim/json_util.hpp"
#include "spinesim/mesh.hpp"
#include "spinesim/planner.hpp"
#include "spinesim/protocol.hpp"
#include "spinesim/safety.hpp"
#include "spinesim/scenario.hpp"
#include "spinesim/volume.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spinesim;

namespace {

void print_json(const json& j) { std::cout << j.dump(2) << std::endl; }

int fail(const std::string& kind, const std::string& code, const std::string& message, int rc) {
  std::cerr << json{{"error", {{"kind", kind}, {"code", code}, {"message", message}}}}.dump() << std::endl;
  return rc;
}

Trajectory read_trajectory(const fs::path& p) {
  const json j = read_json_file(p);
  return trajectory_from_json(j.contains("trajectory") ? j.at("trajectory") : j);
}

std::shared_ptr<const VertebraMesh> mesh_from(const std::string& mesh_path, const std::string& scenario_path) {
  if (!scenario_path.empty()) return load_scenario(scenario_path).mesh;
  if (mesh_path.empty()) contract_error("missing_mesh", "pass --mesh or --scenario");
  return std::make_shared<const VertebraMesh>(load_stl(mesh_path));
}

struct PreprocessArgs {
  std::string volume, materials, out;
  int factor = 1;
  double sigma_mm = 0.0;
};

int run_preprocess(const PreprocessArgs& a) {
  VoxelVolume v = load_volume(a.volume);
  v = resample_volume(v, a.factor, a.sigma_mm);
  if (!a.materials.empty()) v = apply_materials(v, load_material_table(a.materials));
  write_volume(v, a.out);
  print_json({{"out", a.out},
              {"dims", {v.dims()[0], v.dims()[1], v.dims()[2]}},
              {"spacing_mm", to_json(v.spacing())}});
  return 0;
}

int run_gen_trajectories(const std::string& scenario, const std::string& out) {
  const Scenario s = load_scenario(scenario);
  const json j = plans_to_json(s.plans);
  write_json_file(j, out);
  json unplanned = json::array();
  for (const auto& p : s.plans) {
    if (!p.selection.selected) {
      const std::string who = p.annotation.level + " " + side_name(p.annotation.side);
      unplanned.push_back(who);
      std::cerr << json{{"warning", {{"code", "no_survivor"}, {"pedicle", who}}}}.dump() << std::endl;
    }
  }
  print_json({{"out", out}, {"plans", j.at("plans").size()}, {"unplanned", unplanned}});
  return 0;
}

struct EpisodeArgs {
  std::string scenario, out, init_mode = "randomized";
  int count = 10;
  std::optional<std::uint64_t> seed;
  bool no_images = false;
};

int run_gen_episodes(const EpisodeArgs& a) {
  Scenario s = load_scenario(a.scenario);
  if (a.seed) s.seed = *a.seed;
  auto episodes = generate_episodes(s, a.count, parse_init_mode(a.init_mode), !a.no_images);
  const DatasetManifest m = write_dataset(std::move(episodes), a.out, s.split, s.seed);
  print_json({{"out", a.out},
              {"total", m.episode_dirs.size()},
              {"train", m.count("train")},
              {"val", m.count("val")},
              {"test", m.count("test")}});
  return 0;
}

int run_grade(const std::string& mesh, const std::string& scenario, const std::string& traj, double radius) {
  const auto m = mesh_from(mesh, scenario);
  const Trajectory t = read_trajectory(traj);
  const BreachReport r = assess_cannula(*m, t, radius);
  print_json({{"grade", std::string(1, grade_letter(r.grade))},
              {"max_breach_mm", r.max_breach_mm},
              {"breach_location_mm", to_json(r.breach_location)},
              {"extra_pedicular", r.extra_pedicular},
              {"mean_wall_distance_mm", r.mean_wall_distance()}});
  return 0;
}

int run_metrics(const std::string& mesh, const std::string& scenario, const std::string& pred,
                const std::string& ref) {
  const auto m = mesh_from(mesh, scenario);
  const Trajectory p = read_trajectory(pred);
  const Trajectory r = read_trajectory(ref);
  print_json({{"entry_distance_mm", entry_point_distance(p, r, *m)}, {"angular_offset_deg", angular_offset(p, r)}});
  return 0;
}

int run_serve(const std::vector<std::string>& scenarios, int port, const std::string& host) {
  std::vector<Scenario> loaded;
  for (const auto& p : scenarios) loaded.push_back(load_scenario(p));
  const RolloutService service(std::move(loaded));

  // Handle SIGINT/SIGTERM synchronously on this thread.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  RolloutServer server(service, port, host);
  server.start();
  std::cout << json{{"listening", {{"host", host}, {"port", server.port()}}}, {"scenarios", service.scenario_ids()}}.dump()
            << std::endl;
  int sig = 0;
  sigwait(&sigs, &sig);
  server.stop();
  return 0;
}

struct ReplayArgs {
  std::string episode, host = "127.0.0.1", observation;
  int port = 0;
  double offset_mm = 0.0;
};

int run_replay(const ReplayArgs& a) {
  EpisodeRecord rec = read_episode(a.episode);
  if (a.offset_mm != 0.0) {
    // Shift along the final local x on the last orientation step: after it the
    // cannula axis already equals the plan axis, so the shift is perpendicular.
    int last = -1;
    for (int i = 0; i < static_cast<int>(rec.actions.size()); ++i) {
      if (rec.actions[i].phase == Phase::Orientation) last = i;
    }
    if (last < 0) contract_error("no_orientation_phase", "episode has no orientation step to offset");
    rec.actions[last].translation_mm.x() += a.offset_mm;
  }
  RolloutClient client(a.host, a.port);
  json reset = {{"type", "reset"},
                {"version", kProtocolVersion},
                {"scenario", rec.meta.scenario_id},
                {"init_mode", init_mode_name(rec.meta.init_mode)},
                {"seed", rec.meta.seed},
                {"side", side_name(rec.meta.side)}};
  if (!a.observation.empty()) reset["observation"] = a.observation;
  const auto check = [](const json& reply) {
    if (reply.at("type") == "error") {
      contract_error(reply.at("code").get<std::string>(), "server: " + reply.at("message").get<std::string>());
    }
    return reply;
  };
  const json first = check(client.request(reset));
  const std::string session = first.at("session");
  bool done = first.at("done");
  for (const auto& act : rec.actions) {
    if (done) break;
    const auto arr = act.to_array();
    const json reply = check(client.request(json{{"type", "step"},
                                                 {"version", kProtocolVersion},
                                                 {"session", session},
                                                 {"action", std::vector<float>(arr.begin(), arr.end())}}));
    done = reply.at("done");
  }
  if (!done) check(client.request(json{{"type", "terminate"}, {"version", kProtocolVersion}, {"session", session}}));
  print_json(check(client.request(json{{"type", "result"}, {"version", kProtocolVersion}, {"session", session}})));
  return 0;
}

struct BlendArgs {
  std::string image, scenario, trajectory, out, view = "ap";
  int frames = 10;
  std::optional<double> attenuation, radius;
};

int run_blend_real(const BlendArgs& a) {
  if (a.frames < 1) contract_error("invalid_frames", "--frames must be >= 1");
  const RadiographImage real = read_png(a.image);
  const Scenario s = load_scenario(a.scenario);
  CameraConfig cam = s.camera;
  cam.image_px = {real.width, real.height};
  CameraView view;
  if (a.view == "ap") {
    const auto* l = s.annotations.find(s.level, Side::Left);
    const auto* r = s.annotations.find(s.level, Side::Right);
    view = make_ap_view((l ? l : r)->axis, (r ? r : l)->axis, s.target_centroid, cam);
  } else if (a.view == "lateral") {
    view = make_lateral_view(s.patient_right, s.target_centroid, cam);
  } else {
    contract_error("invalid_view", "--view must be 'ap' or 'lateral'");
  }
  const Trajectory t = read_trajectory(a.trajectory);
  CannulaModel c;
  c.pose.rotation = frame_from_z(t.direction);
  c.length_mm = s.cannula_length_mm;
  c.radius_mm = a.radius.value_or(s.cannula_radius_mm);
  c.attenuation_per_mm = a.attenuation.value_or(s.cannula_attenuation_per_mm);
  fs::create_directories(a.out);
  json written = json::array();
  for (int k = 0; k < a.frames; ++k) {
    const double depth = a.frames == 1 ? t.depth_mm : t.depth_mm * k / (a.frames - 1);
    c.pose.translation = t.entry + depth * t.direction;
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03d.png", k);
    write_png16(blend_real(real, view, c), fs::path(a.out) / name);
    written.push_back(name);
  }
  print_json({{"out", a.out}, {"frames", written}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"X-ray-guided pedicle cannula insertion sandbox"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Resample/smooth a volume and map labels to attenuation");
  c_pre->add_option("--volume", pre.volume, "Input volume header (.json)")->required();
  c_pre->add_option("--materials", pre.materials, "Material table (.json)");
  c_pre->add_option("--factor", pre.factor, "Integer upsampling factor")->check(CLI::Range(1, 8));
  c_pre->add_option("--sigma-mm", pre.sigma_mm, "Gaussian smoothing sigma")->check(CLI::NonNegativeNumber);
  c_pre->add_option("--out", pre.out, "Output volume header (.json)")->required();

  std::string scenario, out;
  auto* c_traj = app.add_subcommand("gen-trajectories", "Plan and audit trajectories per annotated pedicle");
  c_traj->add_option("--scenario", scenario)->required();
  c_traj->add_option("--out", out, "Plan file (.json)")->required();

  EpisodeArgs ep;
  auto* c_ep = app.add_subcommand("gen-episodes", "Synthesize expert episodes into a split dataset");
  c_ep->add_option("--scenario", ep.scenario)->required();
  c_ep->add_option("--count", ep.count)->check(CLI::NonNegativeNumber);
  c_ep->add_option("--out", ep.out, "Dataset root")->required();
  c_ep->add_option("--init-mode", ep.init_mode, "randomized | midline");
  c_ep->add_option("--seed", ep.seed, "Override the scenario seed");
  c_ep->add_flag("--no-images", ep.no_images, "Write actions and metadata only");

  std::string mesh, traj, pred, ref;
  double radius = 1.0;
  auto* c_grade = app.add_subcommand("grade", "Grade a trajectory against a mesh");
  c_grade->add_option("--mesh", mesh, "Binary STL");
  c_grade->add_option("--scenario", scenario, "Use the scenario mesh instead of --mesh");
  c_grade->add_option("--trajectory", traj)->required();
  c_grade->add_option("--radius-mm", radius)->check(CLI::PositiveNumber);

  auto* c_metrics = app.add_subcommand("metrics", "Entry-point distance and angular offset");
  c_metrics->add_option("--mesh", mesh, "Binary STL");
  c_metrics->add_option("--scenario", scenario, "Use the scenario mesh instead of --mesh");
  c_metrics->add_option("--pred", pred)->required();
  c_metrics->add_option("--ref", ref)->required();

  std::vector<std::string> scenarios;
  int port = 0;
  std::string host = "127.0.0.1";
  auto* c_serve = app.add_subcommand("serve", "Run the rollout server until SIGINT/SIGTERM");
  c_serve->add_option("--scenario", scenarios, "Scenario file (repeatable)")->required();
  c_serve->add_option("--port", port, "0 picks a free port");
  c_serve->add_option("--host", host);

  ReplayArgs rp;
  auto* c_replay = app.add_subcommand("replay", "Replay a recorded episode through a server");
  c_replay->add_option("--episode", rp.episode, "Episode directory")->required();
  c_replay->add_option("--port", rp.port)->required();
  c_replay->add_option("--host", rp.host);
  c_replay->add_option("--observation", rp.observation, "full | no_crop | ap_only | lateral_only");
  c_replay->add_option("--offset-mm", rp.offset_mm, "Perpendicular entry shift injected before insertion");

  BlendArgs bl;
  auto* c_blend = app.add_subcommand("blend-real", "Composite a simulated cannula into a real radiograph");
  c_blend->add_option("--image", bl.image, "Real radiograph (grayscale PNG)")->required();
  c_blend->add_option("--scenario", bl.scenario)->required();
  c_blend->add_option("--trajectory", bl.trajectory)->required();
  c_blend->add_option("--view", bl.view, "ap | lateral");
  c_blend->add_option("--frames", bl.frames);
  c_blend->add_option("--attenuation", bl.attenuation, "Override cannula attenuation (1/mm)");
  c_blend->add_option("--radius-mm", bl.radius);
  c_blend->add_option("--out", bl.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("contract", "usage", e.what(), 1);
  }

  try {
    if (*c_pre) return run_preprocess(pre);
    if (*c_traj) return run_gen_trajectories(scenario, out);
    if (*c_ep) return run_gen_episodes(ep);
    if (*c_grade) return run_grade(mesh, scenario, traj, radius);
    if (*c_metrics) return run_metrics(mesh, scenario, pred, ref);
    if (*c_serve) return run_serve(scenarios, port, host);
    if (*c_replay) return run_replay(rp);
    if (*c_blend) return run_blend_real(bl);
  } catch (const Error& e) {
    return e.kind() == ErrorKind::Io ? fail("io", e.code(), e.what(), 2) : fail("contract", e.code(), e.what(), 1);
  } catch (const fs::filesystem_error& e) {
    return fail("io", "filesystem", e.what(), 2);
  } catch (const nlohmann::json::exception& e) {
    return fail("contract", "malformed_json", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("contract", "failure", e.what(), 1);
  }
  return 1;
}
