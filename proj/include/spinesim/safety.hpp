#pragma once

#include "spinesim/geometry.hpp"
#include "spinesim/mesh.hpp"

#include <vector>

namespace spinesim {

/// Planned insertion line: the axis runs from `entry` along `direction` for `depth_mm`.
struct Trajectory {
  Vec3 entry = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double depth_mm = 0.0;

  Vec3 tip() const { return entry + depth_mm * direction; }
  void validate() const;
};

/// Modified Gertzbein-Robbins grade.
enum class Grade { A, B, C, D, E };
char grade_letter(Grade g);
Grade parse_grade(char c);

/// A: no breach, B: <= 2 mm, C: <= 4 mm, D: <= 6 mm, E: beyond 6 mm.
Grade grade_for_breach(double max_breach_mm, bool extra_pedicular);

/// One axis sample along a trajectory. Samples outside the mesh are breach
/// markers: `inside` is false and `distance_mm` is the distance outside.
struct WallSample {
  double arc_mm = 0.0;
  double distance_mm = 0.0;
  bool inside = true;
};

struct SafetySampling {
  double axial_step_mm = 0.5;
  int circumferential_samples = 16;
  double profile_step_mm = 0.5;
};

struct BreachReport {
  double max_breach_mm = 0.0;
  Vec3 breach_location = Vec3::Zero();
  bool extra_pedicular = false;
  Grade grade = Grade::A;
  std::vector<WallSample> profile;

  /// Mean wall distance over the in-mesh profile samples; 0 when there are none.
  double mean_wall_distance() const;
};

/// Wall distances for axis samples strictly after the first mesh entry, up
/// to the tip. Empty if the axis never enters the mesh.
std::vector<WallSample> wall_distance_profile(const VertebraMesh& m, const Trajectory& traj,
                                              double step_mm);

/// Samples the lateral surface of a cylinder of `radius_mm` around the
/// intra-osseous part of the trajectory and grades the worst breach.
BreachReport assess_cannula(const VertebraMesh& m, const Trajectory& traj, double radius_mm = 1.0,
                            const SafetySampling& sampling = {});

}  // namespace spinesim
