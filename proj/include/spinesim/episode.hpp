#pragma once

#include "spinesim/drr.hpp"
#include "spinesim/geometry.hpp"
#include "spinesim/mesh.hpp"
#include "spinesim/rng.hpp"
#include "spinesim/safety.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace spinesim {

enum class Phase { Navigation = 0, Orientation = 1, Insertion = 2 };
std::string phase_name(Phase p);

/// Incremental command in the cannula's local frame. Serialized as 11
/// float32 values: translation (3, mm), rotation (3, intrinsic XYZ degrees),
/// insertion depth (1, mm), one-hot phase (3), pedicle side (1; 0 left, 1 right).
struct DeltaAction {
  static constexpr int kSize = 11;

  Vec3 translation_mm = Vec3::Zero();
  Vec3 rotation_deg = Vec3::Zero();
  double insertion_mm = 0.0;
  Phase phase = Phase::Navigation;
  Side side = Side::Left;

  std::array<float, kSize> to_array() const;
  /// Throws Error("bad_one_hot") unless exactly one phase flag is 1 and the
  /// others 0, and Error("invalid_side") unless side is 0 or 1.
  static DeltaAction from_array(const std::array<float, kSize>& a);
  /// Rounds every component to float32, matching the on-disk encoding.
  DeltaAction quantized() const { return from_array(to_array()); }

  bool has_pose_change() const { return !translation_mm.isZero(0.0) || !rotation_deg.isZero(0.0); }
};

/// Cannula state. The pose is the guide frame at the skin/bone entry: its
/// origin is where the tip sits with zero insertion, and its +z is the
/// insertion direction. The tip is at origin + insertion * z.
struct SceneState {
  Pose pose;
  double insertion_mm = 0.0;
  Phase phase = Phase::Navigation;
  std::string level = "L1";
  Side side = Side::Left;
  CameraView ap_view;
  CameraView lateral_view;
  double cannula_length_mm = CannulaModel::kDefaultLengthMm;

  Vec3 tip() const { return pose.translation + insertion_mm * pose.axis_z(); }
  Trajectory trajectory() const { return {pose.translation, pose.axis_z(), insertion_mm}; }
  CannulaModel cannula(double radius_mm, double attenuation_per_mm) const;
};

/// Applies a local-frame delta: rotation first (R' = R dR), then translation
/// in the rotated frame (t' = t + R' dt), then insertion along +z.
SceneState apply_action(const SceneState& s, const DeltaAction& a);

enum class InitMode { Randomized, Midline };
std::string init_mode_name(InitMode m);
InitMode parse_init_mode(const std::string& s);

/// Initial-pose sampler. The nominal start sits `standoff_mm` behind the
/// target along -nominal_axis, pointing along nominal_axis.
struct InitBounds {
  double standoff_mm = 60.0;
  Vec3 box_half_mm{15.0, 10.0, 15.0};
  double cone_half_angle_deg = 15.0;
  Vec3 nominal_axis = Vec3::UnitY();

  void validate() const;
};

Pose init_pose(InitMode mode, const Vec3& target, std::uint64_t seed, const InitBounds& bounds = {});

/// Uniform sample inside the +/-5 deg, +/-2.5 cm bounds.
ViewPerturbation sample_perturbation(Rng& rng);

struct PhaseSchedule {
  int navigation = 80;
  int orientation = 60;
  int insertion = 60;

  int total() const { return navigation + orientation + insertion; }
  void validate(int episode_length) const;
};

/// Static inputs for expert synthesis.
struct ExpertScene {
  const VoxelVolume* volume = nullptr;
  std::string patient_id = "phantom";
  std::string scenario_id;
  std::string level = "L1";
  Side side = Side::Left;
  Trajectory plan;
  Vec3 target_centroid = Vec3::Zero();
  Vec3 ap_left_axis = Vec3::UnitY();
  Vec3 ap_right_axis = Vec3::UnitY();
  Vec3 patient_right = Vec3::UnitX();
  CameraConfig camera;
  ObservationConfig observation;
  RenderOptions render_options;
  double cannula_radius_mm = 1.0;
  double cannula_attenuation_per_mm = 2.0;
  double cannula_length_mm = CannulaModel::kDefaultLengthMm;
  InitBounds init_bounds;
  PhaseSchedule schedule;
  int episode_length = 200;
  /// When false only actions are produced (no rendering).
  bool render = true;
};

struct EpisodeMeta {
  std::string patient_id;
  std::string scenario_id;
  std::string level;
  Side side = Side::Left;
  std::uint64_t seed = 0;
  InitMode init_mode = InitMode::Randomized;
  ViewPerturbation ap_perturbation;
  ViewPerturbation lateral_perturbation;
  std::string split;
  int length = 200;
  PhaseSchedule schedule;
  Trajectory plan;
  Pose initial_pose;
};

/// Encoded PNGs of one timestep's observation set; absent slots are empty.
using EncodedObservation = std::array<std::optional<std::vector<std::uint8_t>>, 4>;

struct EpisodeRecord {
  EpisodeMeta meta;
  std::vector<DeltaAction> actions;
  std::vector<EncodedObservation> observations;
};

/// Initial scene state (views perturbed with the episode's seeded offsets).
SceneState initial_state(const ExpertScene& scene, InitMode mode, std::uint64_t seed,
                         ViewPerturbation* ap_out = nullptr, ViewPerturbation* lat_out = nullptr);

ImagingContext imaging_context(const ExpertScene& scene, const SceneState& s);
EncodedObservation encode_observation(const ObservationSet& obs);

/// Expert demonstration: navigation to the plan entry, orientation onto the
/// plan direction, then insertion to the plan depth, with every phase's
/// motion split evenly over its scheduled steps.
EpisodeRecord synthesize_expert(const ExpertScene& scene, InitMode mode, std::uint64_t seed);

/// Replays actions from a start state; throws on any invalid action.
SceneState replay(const SceneState& start, const std::vector<DeltaAction>& actions);

/// Stable per-episode seed from (base seed, patient, level, side, repeat).
std::uint64_t episode_seed(std::uint64_t base_seed, const std::string& patient_id,
                           const std::string& level, Side side, int repeat);

}  // namespace spinesim
