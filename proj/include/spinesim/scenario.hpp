#pragma once

#include "spinesim/dataset.hpp"
#include "spinesim/drr.hpp"
#include "spinesim/episode.hpp"
#include "spinesim/mesh.hpp"
#include "spinesim/phantom.hpp"
#include "spinesim/planner.hpp"
#include "spinesim/volume.hpp"

#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace spinesim {


struct PlanOutcome {
  PedicleAnnotation annotation;
  Selection selection;
};

/// A loaded scenario: imaging/mesh assets plus every configuration block.
/// Assets are shared immutably, so copies are cheap and thread-safe to read.
struct Scenario {
  std::string id;
  std::string patient_id = "patient";
  std::string level = "L1";
  std::filesystem::path source;

  std::shared_ptr<const VoxelVolume> volume;
  std::shared_ptr<const VertebraMesh> mesh;
  AnnotationFile annotations;
  std::optional<PhantomSpec> phantom;

  Vec3 target_centroid = Vec3::Zero();
  Vec3 patient_right = Vec3::UnitX();
  CameraConfig camera;
  ObservationConfig observation;
  RenderOptions render;
  int episode_length = 200;
  PhaseSchedule schedule;
  InitBounds init;
  SplitFractions split;
  CandidateGrid grid;
  SelectionCriteria criteria;
  double cannula_length_mm = CannulaModel::kDefaultLengthMm;
  double cannula_radius_mm = 1.0;
  double cannula_attenuation_per_mm = 2.0;
  std::uint64_t seed = 0;

  /// Precomputed reference plans (set by compute_plans or a plan file).
  std::vector<PlanOutcome> plans;

  const PlanOutcome* plan_for(const std::string& level, Side side) const;
  ExpertScene expert_scene(Side side, const Trajectory& plan) const;
};

/// Parses a scenario file and loads (or synthesizes) every referenced asset.
Scenario load_scenario(const std::filesystem::path& path);
Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

/// Runs candidate generation and selection for every annotated pedicle.
std::vector<PlanOutcome> compute_plans(const Scenario& s);

nlohmann::json plans_to_json(const std::vector<PlanOutcome>& plans);

/// Expert episodes cycling over the pedicles that have a plan: episode i uses
/// pedicle i % k with repeat i / k and a seed from episode_seed(s.seed, ...).
/// Throws Error("plan_missing") when no pedicle has a plan.
std::vector<EpisodeRecord> generate_episodes(const Scenario& s, int count, InitMode mode, bool render = true);

}  // namespace spinesim
