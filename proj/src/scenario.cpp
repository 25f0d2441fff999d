#include "spinesim/scenario.hpp"

#include "spinesim/error.hpp"
#include "spinesim/json_util.hpp"

#include <cmath>

namespace spinesim {

namespace fs = std::filesystem;
using nlohmann::json;

const PlanOutcome* Scenario::plan_for(const std::string& lvl, Side side) const {
  for (const auto& p : plans) {
    if (p.annotation.level == lvl && p.annotation.side == side) return &p;
  }
  return nullptr;
}

ExpertScene Scenario::expert_scene(Side side, const Trajectory& plan) const {
  ExpertScene e;
  e.volume = volume.get();
  e.patient_id = patient_id;
  e.scenario_id = id;
  e.level = level;
  e.side = side;
  e.plan = plan;
  e.target_centroid = target_centroid;
  const auto* left = annotations.find(level, Side::Left);
  const auto* right = annotations.find(level, Side::Right);
  if (!left && !right) contract_error("missing_annotation", "no pedicle annotation for level " + level);
  e.ap_left_axis = (left ? left : right)->axis;
  e.ap_right_axis = (right ? right : left)->axis;
  e.patient_right = patient_right;
  e.camera = camera;
  e.observation = observation;
  e.render_options = render;
  e.cannula_radius_mm = cannula_radius_mm;
  e.cannula_attenuation_per_mm = cannula_attenuation_per_mm;
  e.cannula_length_mm = cannula_length_mm;
  e.init_bounds = init;
  e.schedule = schedule;
  e.episode_length = episode_length;
  return e;
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

Vec3 vec3_or(const json& j, const char* key, const Vec3& fallback) {
  return j.contains(key) ? vec3_from_json(j.at(key)) : fallback;
}

std::array<int, 2> int2(const json& j) {
  if (!j.is_array() || j.size() != 2) contract_error("malformed_scenario", "expected a 2-element array");
  return {j[0].get<int>(), j[1].get<int>()};
}

std::array<double, 2> double2(const json& j) {
  if (!j.is_array() || j.size() != 2) contract_error("malformed_scenario", "expected a 2-element array");
  return {j[0].get<double>(), j[1].get<double>()};
}

void require(bool ok, const std::string& what) {
  if (!ok) contract_error("scenario_out_of_bounds", what);
}

fs::path resolve(const fs::path& base, const std::string& rel) {
  const fs::path p(rel);
  return p.is_absolute() ? p : base / p;
}

}  // namespace

PhantomSpec phantom_spec_from_json(const json& j) {
  PhantomSpec s;
  s.kind = parse_phantom_kind(j.at("kind").get<std::string>());
  s.level = get_or<std::string>(j, "level", s.level);
  s.center = vec3_or(j, "center_mm", s.center);
  s.voxel_mm = get_or(j, "voxel_mm", s.voxel_mm);
  s.margin_mm = get_or(j, "margin_mm", s.margin_mm);
  s.box_size_mm = vec3_or(j, "box_size_mm", s.box_size_mm);
  s.sphere_radius_mm = get_or(j, "sphere_radius_mm", s.sphere_radius_mm);
  s.sphere_subdivisions = get_or(j, "sphere_subdivisions", s.sphere_subdivisions);
  s.body_radius_mm = get_or(j, "body_radius_mm", s.body_radius_mm);
  s.body_height_mm = get_or(j, "body_height_mm", s.body_height_mm);
  s.corridor_inner_radius_mm = get_or(j, "corridor_inner_radius_mm", s.corridor_inner_radius_mm);
  s.corridor_length_mm = get_or(j, "corridor_length_mm", s.corridor_length_mm);
  s.corridor_half_spacing_mm = get_or(j, "corridor_half_spacing_mm", s.corridor_half_spacing_mm);
  s.corridor_convergence_deg = get_or(j, "corridor_convergence_deg", s.corridor_convergence_deg);
  s.corridor_entry_y_mm = get_or(j, "corridor_entry_y_mm", s.corridor_entry_y_mm);
  s.cortical_thickness_mm = get_or(j, "cortical_thickness_mm", s.cortical_thickness_mm);
  s.annotation_depth_mm = get_or(j, "annotation_depth_mm", s.annotation_depth_mm);
  s.corridor_segments = get_or(j, "corridor_segments", s.corridor_segments);
  s.attenuation_per_mm = get_or(j, "attenuation_per_mm", s.attenuation_per_mm);
  s.cortical_attenuation_per_mm = get_or(j, "cortical_attenuation_per_mm", s.cortical_attenuation_per_mm);
  s.texture_amplitude = get_or(j, "texture_amplitude", s.texture_amplitude);
  s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
  s.validate();
  return s;
}

Scenario scenario_from_json(const json& j, const fs::path& base) {
  Scenario s;
  try {
    s.id = j.at("id").get<std::string>();
    s.patient_id = get_or<std::string>(j, "patient_id", s.id);
    s.seed = get_or<std::uint64_t>(j, "seed", 0);

    std::optional<Vec3> default_target;
    if (j.contains("phantom")) {
      s.phantom = phantom_spec_from_json(j.at("phantom"));
      PhantomBundle b = build_phantom(*s.phantom);
      s.level = s.phantom->level;
      s.volume = std::make_shared<const VoxelVolume>(std::move(b.volume));
      s.mesh = std::make_shared<const VertebraMesh>(std::move(b.mesh));
      s.annotations = std::move(b.annotations);
      default_target = b.target_centroid;
    } else {
      s.level = j.at("level").get<std::string>();
      VoxelVolume vol = load_volume(resolve(base, j.at("volume").get<std::string>()));
      if (j.contains("materials")) {
        vol = apply_materials(vol, load_material_table(resolve(base, j.at("materials").get<std::string>())));
      }
      s.volume = std::make_shared<const VoxelVolume>(std::move(vol));
      s.annotations = load_annotations(resolve(base, j.at("annotations").get<std::string>()));
      VertebraMesh m = load_stl(resolve(base, j.at("mesh").get<std::string>()), s.level);
      if (!s.annotations.pedicle_regions.empty()) {
        m = VertebraMesh(m.vertices(), m.triangles(), s.level, s.annotations.pedicle_regions);
      }
      default_target = m.centroid();
      s.mesh = std::make_shared<const VertebraMesh>(std::move(m));
    }
    if (j.contains("annotations") && j.contains("phantom")) {
      s.annotations = load_annotations(resolve(base, j.at("annotations").get<std::string>()));
    }
    s.target_centroid = vec3_or(j, "target_center_mm", *default_target);
    s.patient_right = vec3_or(j, "patient_right", s.patient_right);
    require(s.patient_right.norm() > 0.0, "patient_right must be non-zero");
    s.patient_right.normalize();

    if (j.contains("camera")) {
      const auto& c = j.at("camera");
      s.camera.source_to_detector_mm = get_or(c, "source_to_detector_mm", s.camera.source_to_detector_mm);
      s.camera.source_to_target_mm = get_or(c, "source_to_target_mm", s.camera.source_to_target_mm);
      if (c.contains("detector_size_mm")) s.camera.detector_size_mm = double2(c.at("detector_size_mm"));
      if (c.contains("image_px")) s.camera.image_px = int2(c.at("image_px"));
    }
    require(s.camera.source_to_target_mm > 0.0 && s.camera.source_to_target_mm < s.camera.source_to_detector_mm,
            "camera needs 0 < source_to_target < source_to_detector");
    require(s.camera.image_px[0] >= 8 && s.camera.image_px[1] >= 8 && s.camera.image_px[0] <= 4096 &&
                s.camera.image_px[1] <= 4096,
            "image_px must be within [8, 4096]");
    require(s.camera.detector_size_mm[0] > 0.0 && s.camera.detector_size_mm[1] > 0.0, "detector size must be > 0");

    if (j.contains("observation")) {
      const auto& o = j.at("observation");
      s.observation.ap = get_or(o, "ap", true);
      s.observation.lateral = get_or(o, "lateral", true);
      s.observation.crops = get_or(o, "crops", true);
      if (o.contains("crop_px")) s.observation.crop_px = int2(o.at("crop_px"));
    }
    require(s.observation.crop_px[0] >= 1 && s.observation.crop_px[1] >= 1 &&
                s.observation.crop_px[0] <= s.camera.image_px[0] && s.observation.crop_px[1] <= s.camera.image_px[1],
            "crop_px must fit inside image_px");

    if (j.contains("render")) s.render.step_fraction = get_or(j.at("render"), "step_fraction", s.render.step_fraction);
    require(s.render.step_fraction > 0.0 && s.render.step_fraction <= 2.0, "render step_fraction must be in (0, 2]");

    if (j.contains("episode")) {
      const auto& e = j.at("episode");
      s.episode_length = get_or(e, "length", s.episode_length);
      if (e.contains("schedule")) {
        const auto& sc = e.at("schedule");
        if (!sc.is_array() || sc.size() != 3) contract_error("malformed_scenario", "schedule needs 3 entries");
        s.schedule = {sc[0].get<int>(), sc[1].get<int>(), sc[2].get<int>()};
      }
      if (e.contains("init")) {
        const auto& in = e.at("init");
        s.init.standoff_mm = get_or(in, "standoff_mm", s.init.standoff_mm);
        s.init.box_half_mm = vec3_or(in, "box_half_mm", s.init.box_half_mm);
        s.init.cone_half_angle_deg = get_or(in, "cone_half_angle_deg", s.init.cone_half_angle_deg);
        s.init.nominal_axis = vec3_or(in, "nominal_axis", s.init.nominal_axis);
      }
      if (e.contains("split")) {
        const auto& sp = e.at("split");
        if (!sp.is_array() || sp.size() != 3) contract_error("malformed_scenario", "split needs 3 fractions");
        s.split = {sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>()};
      }
    }
    require(s.episode_length >= 1 && s.episode_length <= 10000, "episode length must be in [1, 10000]");
    s.schedule.validate(s.episode_length);
    s.init.validate();
    s.split.validate();

    if (j.contains("cannula")) {
      const auto& c = j.at("cannula");
      s.cannula_length_mm = get_or(c, "length_mm", s.cannula_length_mm);
      s.cannula_radius_mm = get_or(c, "radius_mm", s.cannula_radius_mm);
      s.cannula_attenuation_per_mm = get_or(c, "attenuation_per_mm", s.cannula_attenuation_per_mm);
    }
    require(s.cannula_length_mm > 0.0 && s.cannula_radius_mm > 0.0 && s.cannula_attenuation_per_mm >= 0.0,
            "cannula length/radius must be > 0 and attenuation >= 0");

    if (j.contains("planner")) {
      const auto& p = j.at("planner");
      s.grid.half_extent_mm = get_or(p, "half_extent_mm", s.grid.half_extent_mm);
      s.grid.step_mm = get_or(p, "step_mm", s.grid.step_mm);
      s.criteria.min_mean_wall_distance_mm = get_or(p, "min_mean_wall_distance_mm", s.criteria.min_mean_wall_distance_mm);
      s.criteria.cannula_radius_mm = get_or(p, "cannula_radius_mm", s.cannula_radius_mm);
      s.criteria.sampling.axial_step_mm = get_or(p, "axial_step_mm", s.criteria.sampling.axial_step_mm);
      s.criteria.sampling.circumferential_samples =
          get_or(p, "circumferential_samples", s.criteria.sampling.circumferential_samples);
      s.criteria.sampling.profile_step_mm = get_or(p, "profile_step_mm", s.criteria.sampling.profile_step_mm);
    } else {
      s.criteria.cannula_radius_mm = s.cannula_radius_mm;
    }
    require(s.grid.step_mm > 0.0 && s.grid.half_extent_mm >= 0.0, "planner grid must have step > 0, extent >= 0");
  } catch (const json::exception& e) {
    contract_error("malformed_scenario", std::string("scenario: ") + e.what());
  }
  if (s.annotations.entries.empty()) contract_error("missing_annotation", "scenario has no pedicle annotations");
  s.plans = compute_plans(s);
  return s;
}

Scenario load_scenario(const fs::path& path) {
  const json j = read_json_file(path);
  Scenario s = scenario_from_json(j, path.parent_path());
  s.source = path;
  return s;
}

std::vector<PlanOutcome> compute_plans(const Scenario& s) {
  std::vector<PlanOutcome> out;
  for (const auto& a : s.annotations.entries) {
    PlanOutcome p;
    p.annotation = a;
    p.selection = filter_and_select(generate_candidates(a, s.grid), *s.mesh, s.criteria);
    out.push_back(std::move(p));
  }
  return out;
}

json plans_to_json(const std::vector<PlanOutcome>& plans) {
  json j;
  j["plans"] = json::array();
  j["audit"] = json::array();
  for (const auto& p : plans) {
    json candidates = json::array();
    for (const auto& c : p.selection.audit) {
      candidates.push_back({{"index", c.index},
                            {"trajectory", to_json(c.trajectory)},
                            {"mean_wall_distance_mm", c.mean_wall_distance_mm},
                            {"max_breach_mm", c.max_breach_mm},
                            {"grade", std::string(1, grade_letter(c.grade))},
                            {"survived", c.survived}});
    }
    json audit = {{"level", p.annotation.level},
                  {"side", side_name(p.annotation.side)},
                  {"candidates", candidates},
                  {"survivors", std::count_if(p.selection.audit.begin(), p.selection.audit.end(),
                                              [](const CandidateAudit& c) { return c.survived; })}};
    if (p.selection.selected) {
      const auto& sel = p.selection.audit[*p.selection.selected];
      audit["selected"] = sel.index;
      j["plans"].push_back({{"level", p.annotation.level},
                            {"side", side_name(p.annotation.side)},
                            {"trajectory", to_json(sel.trajectory)},
                            {"candidate_index", sel.index},
                            {"mean_wall_distance_mm", sel.mean_wall_distance_mm}});
    } else {
      audit["selected"] = nullptr;
    }
    j["audit"].push_back(audit);
  }
  return j;
}

std::vector<EpisodeRecord> generate_episodes(const Scenario& s, int count, InitMode mode, bool render) {
  if (count < 0) contract_error("invalid_count", "episode count must be >= 0");
  std::vector<const PlanOutcome*> usable;
  for (const auto& p : s.plans) {
    if (p.selection.selected && p.annotation.level == s.level) usable.push_back(&p);
  }
  if (usable.empty()) contract_error("plan_missing", "no pedicle in scenario '" + s.id + "' has a surviving plan");
  std::vector<EpisodeRecord> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const PlanOutcome& p = *usable[static_cast<std::size_t>(i) % usable.size()];
    const int repeat = i / static_cast<int>(usable.size());
    ExpertScene scene = s.expert_scene(p.annotation.side, *p.selection.trajectory());
    scene.render = render;
    const std::uint64_t seed = episode_seed(s.seed, s.patient_id, s.level, p.annotation.side, repeat);
    out.push_back(synthesize_expert(scene, mode, seed));
  }
  return out;
}

}  // namespace spinesim
