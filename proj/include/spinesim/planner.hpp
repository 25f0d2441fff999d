#pragma once

#include "spinesim/mesh.hpp"
#include "spinesim/safety.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spinesim {

/// Reference pedicle entry for one vertebra side.
struct PedicleAnnotation {
  std::string level = "L1";
  Side side = Side::Left;
  Vec3 entry = Vec3::Zero();
  Vec3 axis = Vec3::UnitY();
  double depth_mm = 0.0;

  Trajectory trajectory() const { return {entry, axis, depth_mm}; }
  void validate() const;
};

struct AnnotationFile {
  std::vector<PedicleAnnotation> entries;
  std::vector<PedicleRegion> pedicle_regions;

  const PedicleAnnotation* find(const std::string& level, Side side) const;
};

AnnotationFile load_annotations(const std::filesystem::path& path);
void write_annotations(const AnnotationFile& a, const std::filesystem::path& path);

struct CandidateGrid {
  double half_extent_mm = 3.0;
  double step_mm = 0.75;
};

/// Parallel trajectories whose entries are offset on a square grid in the
/// plane perpendicular to the annotation axis. Index 0 is the unshifted
/// annotation; the rest follow in row-major grid order.
std::vector<Trajectory> generate_candidates(const PedicleAnnotation& a, const CandidateGrid& grid = {});

struct SelectionCriteria {
  double min_mean_wall_distance_mm = 1.0;
  double cannula_radius_mm = 1.0;
  SafetySampling sampling;
};

struct CandidateAudit {
  std::size_t index = 0;
  Trajectory trajectory;
  double mean_wall_distance_mm = 0.0;
  double max_breach_mm = 0.0;
  Grade grade = Grade::E;
  bool survived = false;
};

struct Selection {
  std::optional<std::size_t> selected;
  std::vector<CandidateAudit> audit;

  std::optional<Trajectory> trajectory() const {
    if (!selected) return std::nullopt;
    return audit[*selected].trajectory;
  }
};

/// Drops candidates that breach (grade != A) or whose mean wall distance is
/// below the threshold, and picks the survivor with the greatest mean wall
/// distance (lowest index on ties).
Selection filter_and_select(const std::vector<Trajectory>& candidates, const VertebraMesh& m,
                            const SelectionCriteria& criteria = {});

/// Distance between the first axis-mesh intersections of two trajectories.
double entry_point_distance(const Trajectory& pred, const Trajectory& ref, const VertebraMesh& m);

/// Angle between trajectory directions in degrees, in [0, 180].
double angular_offset(const Trajectory& pred, const Trajectory& ref);

/// Plan/trajectory JSON helpers shared by the CLI and the rollout service.
struct PlanRecord {
  std::string level;
  Side side = Side::Left;
  Trajectory trajectory;
  double mean_wall_distance_mm = 0.0;
};

}  // namespace spinesim
