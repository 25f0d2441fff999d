#include "spinesim/episode.hpp"

#include "spinesim/error.hpp"
#include "spinesim/image_io.hpp"

#include <cmath>

namespace spinesim {

std::string phase_name(Phase p) {
  switch (p) {
    case Phase::Navigation: return "navigation";
    case Phase::Orientation: return "orientation";
    case Phase::Insertion: return "insertion";
  }
  return "?";
}

std::array<float, DeltaAction::kSize> DeltaAction::to_array() const {
  std::array<float, kSize> a{};
  for (int i = 0; i < 3; ++i) {
    a[i] = static_cast<float>(translation_mm[i]);
    a[3 + i] = static_cast<float>(rotation_deg[i]);
  }
  a[6] = static_cast<float>(insertion_mm);
  a[7 + static_cast<int>(phase)] = 1.0f;
  a[10] = side == Side::Left ? 0.0f : 1.0f;
  return a;
}

DeltaAction DeltaAction::from_array(const std::array<float, kSize>& a) {
  for (float v : a) {
    if (!std::isfinite(v)) contract_error("invalid_action", "action contains non-finite values");
  }
  int hot = -1;
  for (int i = 0; i < 3; ++i) {
    const float f = a[7 + i];
    if (f == 1.0f) {
      if (hot >= 0) contract_error("bad_one_hot", "more than one phase flag set");
      hot = i;
    } else if (f != 0.0f) {
      contract_error("bad_one_hot", "phase flags must be exactly 0 or 1");
    }
  }
  if (hot < 0) contract_error("bad_one_hot", "no phase flag set");
  if (a[10] != 0.0f && a[10] != 1.0f) contract_error("invalid_side", "pedicle side must be 0 or 1");
  DeltaAction d;
  d.translation_mm = Vec3(a[0], a[1], a[2]);
  d.rotation_deg = Vec3(a[3], a[4], a[5]);
  d.insertion_mm = a[6];
  d.phase = static_cast<Phase>(hot);
  d.side = a[10] == 0.0f ? Side::Left : Side::Right;
  return d;
}

CannulaModel SceneState::cannula(double radius_mm, double attenuation_per_mm) const {
  CannulaModel c;
  c.pose.rotation = pose.rotation;
  c.pose.translation = tip();
  c.length_mm = cannula_length_mm;
  c.radius_mm = radius_mm;
  c.attenuation_per_mm = attenuation_per_mm;
  return c;
}

SceneState apply_action(const SceneState& s, const DeltaAction& a) {
  if (static_cast<int>(a.phase) < static_cast<int>(s.phase)) {
    contract_error("phase_regression", "action phase " + phase_name(a.phase) + " follows " + phase_name(s.phase));
  }
  const double inserted = s.insertion_mm + a.insertion_mm;
  if (inserted > s.cannula_length_mm + 1e-9) {
    contract_error("insertion_exceeds_length", "insertion would exceed the cannula length");
  }
  if (inserted < -1e-9) contract_error("negative_insertion", "insertion depth would become negative");

  SceneState out = s;
  if (!a.rotation_deg.isZero(0.0)) out.pose.rotation = s.pose.rotation * rotation_xyz_deg(a.rotation_deg);
  if (!a.translation_mm.isZero(0.0)) out.pose.translation = s.pose.translation + out.pose.rotation * a.translation_mm;
  out.insertion_mm = std::max(0.0, inserted);
  out.phase = a.phase;
  return out;
}

std::string init_mode_name(InitMode m) { return m == InitMode::Midline ? "midline" : "randomized"; }

InitMode parse_init_mode(const std::string& s) {
  if (s == "midline") return InitMode::Midline;
  if (s == "randomized" || s == "random") return InitMode::Randomized;
  contract_error("invalid_init_mode", "init mode must be 'randomized' or 'midline', got '" + s + "'");
}

void InitBounds::validate() const {
  if (!(standoff_mm >= 0.0) || !(box_half_mm.minCoeff() > 0.0) || !(cone_half_angle_deg > 0.0) ||
      cone_half_angle_deg > 90.0 || !(nominal_axis.norm() > 0.0)) {
    contract_error("invalid_init_bounds", "init bounds must be positive (cone angle <= 90 deg)");
  }
}

Pose init_pose(InitMode mode, const Vec3& target, std::uint64_t seed, const InitBounds& bounds) {
  bounds.validate();
  const Vec3 nominal = bounds.nominal_axis.normalized();
  const Vec3 center = target - bounds.standoff_mm * nominal;
  Pose p;
  if (mode == InitMode::Midline) {
    p.rotation = frame_from_z(nominal);
    p.translation = center;
    return p;
  }
  Rng rng(seed);
  Vec3 offset;
  for (int a = 0; a < 3; ++a) offset[a] = rng.uniform(-bounds.box_half_mm[a], bounds.box_half_mm[a]);
  // Uniform direction on the spherical cap around the nominal axis.
  const double cos_max = std::cos(deg_to_rad(bounds.cone_half_angle_deg));
  const double cos_t = rng.uniform(cos_max, 1.0);
  const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  const Mat3 base = frame_from_z(nominal);
  const Vec3 dir = base * Vec3(sin_t * std::cos(phi), sin_t * std::sin(phi), cos_t);
  p.rotation = frame_from_z(dir);
  p.translation = center + offset;
  return p;
}

ViewPerturbation sample_perturbation(Rng& rng) {
  ViewPerturbation p;
  for (int a = 0; a < 3; ++a) {
    p.rotation_deg[a] = rng.uniform(-ViewPerturbation::kMaxRotationDeg, ViewPerturbation::kMaxRotationDeg);
  }
  for (int a = 0; a < 3; ++a) {
    p.translation_cm[a] = rng.uniform(-ViewPerturbation::kMaxTranslationCm, ViewPerturbation::kMaxTranslationCm);
  }
  return p;
}

void PhaseSchedule::validate(int episode_length) const {
  if (navigation < 0 || orientation < 0 || insertion < 1 || total() != episode_length) {
    contract_error("invalid_schedule", "phase schedule must be non-negative, insert >= 1 step, and sum to " +
                                           std::to_string(episode_length));
  }
}

std::uint64_t episode_seed(std::uint64_t base_seed, const std::string& patient_id, const std::string& level,
                           Side side, int repeat) {
  return SeedHasher()
      .add(base_seed)
      .add(patient_id)
      .add(level)
      .add(static_cast<std::uint64_t>(side))
      .add(static_cast<std::uint64_t>(repeat))
      .finish();
}

SceneState initial_state(const ExpertScene& scene, InitMode mode, std::uint64_t seed, ViewPerturbation* ap_out,
                         ViewPerturbation* lat_out) {
  Rng view_rng(SeedHasher().add(seed).add("views").finish());
  const ViewPerturbation ap_p = sample_perturbation(view_rng);
  const ViewPerturbation lat_p = sample_perturbation(view_rng);
  if (ap_out) *ap_out = ap_p;
  if (lat_out) *lat_out = lat_p;

  SceneState s;
  s.level = scene.level;
  s.side = scene.side;
  s.cannula_length_mm = scene.cannula_length_mm;
  s.pose = init_pose(mode, scene.target_centroid, seed, scene.init_bounds);
  s.ap_view = perturb_view(make_ap_view(scene.ap_left_axis, scene.ap_right_axis, scene.target_centroid, scene.camera), ap_p);
  s.lateral_view = perturb_view(make_lateral_view(scene.patient_right, scene.target_centroid, scene.camera), lat_p);
  return s;
}

ImagingContext imaging_context(const ExpertScene& scene, const SceneState& s) {
  ImagingContext ctx;
  ctx.volume = scene.volume;
  ctx.ap_view = s.ap_view;
  ctx.lateral_view = s.lateral_view;
  ctx.target_centroid = scene.target_centroid;
  ctx.options = scene.render_options;
  return ctx;
}

EncodedObservation encode_observation(const ObservationSet& obs) {
  EncodedObservation out;
  for (int i = 0; i < 4; ++i) {
    if (obs.images[i]) out[i] = encode_png16(*obs.images[i]);
  }
  return out;
}

EpisodeRecord synthesize_expert(const ExpertScene& scene, InitMode mode, std::uint64_t seed) {
  scene.plan.validate();
  scene.schedule.validate(scene.episode_length);
  if (scene.plan.depth_mm > scene.cannula_length_mm) {
    contract_error("plan_too_deep", "plan depth exceeds the cannula length");
  }
  if (scene.render && !scene.volume) contract_error("missing_volume", "rendering requires a volume");

  EpisodeRecord rec;
  auto& meta = rec.meta;
  meta.patient_id = scene.patient_id;
  meta.scenario_id = scene.scenario_id;
  meta.level = scene.level;
  meta.side = scene.side;
  meta.seed = seed;
  meta.init_mode = mode;
  meta.length = scene.episode_length;
  meta.schedule = scene.schedule;
  meta.plan = scene.plan;

  SceneState s = initial_state(scene, mode, seed, &meta.ap_perturbation, &meta.lateral_perturbation);
  meta.initial_pose = s.pose;

  const auto step = [&](const DeltaAction& raw) {
    DeltaAction a = raw;
    a.side = scene.side;
    a = a.quantized();
    if (scene.render) {
      rec.observations.push_back(encode_observation(observation_set(
          imaging_context(scene, s), s.cannula(scene.cannula_radius_mm, scene.cannula_attenuation_per_mm),
          scene.observation)));
    }
    s = apply_action(s, a);
    rec.actions.push_back(a);
  };

  // Each step re-divides the remaining motion so float32 rounding does not accumulate.
  for (int k = 0; k < scene.schedule.navigation; ++k) {
    DeltaAction a;
    a.phase = Phase::Navigation;
    const Vec3 remaining = scene.plan.entry - s.pose.translation;
    a.translation_mm = s.pose.rotation.transpose() * remaining / (scene.schedule.navigation - k);
    step(a);
  }

  const Mat3 target_rotation = rotation_between(s.pose.axis_z(), scene.plan.direction) * s.pose.rotation;
  for (int k = 0; k < scene.schedule.orientation; ++k) {
    DeltaAction a;
    a.phase = Phase::Orientation;
    const Eigen::AngleAxisd remaining(Mat3(s.pose.rotation.transpose() * target_rotation));
    const Eigen::AngleAxisd per_step(remaining.angle() / (scene.schedule.orientation - k), remaining.axis());
    a.rotation_deg = euler_xyz_deg(per_step.toRotationMatrix());
    step(a);
  }

  for (int k = 0; k < scene.schedule.insertion; ++k) {
    DeltaAction a;
    a.phase = Phase::Insertion;
    a.insertion_mm = (scene.plan.depth_mm - s.insertion_mm) / (scene.schedule.insertion - k);
    step(a);
  }
  return rec;
}

SceneState replay(const SceneState& start, const std::vector<DeltaAction>& actions) {
  SceneState s = start;
  for (const auto& a : actions) s = apply_action(s, a);
  return s;
}

}  // namespace spinesim
