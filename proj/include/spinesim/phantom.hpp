#pragma once

#include "spinesim/mesh.hpp"
#include "spinesim/planner.hpp"
#include "spinesim/volume.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace spinesim {

enum class PhantomKind { Box, Sphere, CorridorVertebra };
PhantomKind parse_phantom_kind(const std::string& s);
std::string phantom_kind_name(PhantomKind k);

/// Analytic test scene description. Coordinates: +x patient right,
/// +y anterior, +z superior; the scene is centered on `center`.
struct PhantomSpec {
  PhantomKind kind = PhantomKind::Box;
  std::string level = "L1";
  Vec3 center = Vec3::Zero();
  double voxel_mm = 2.0;
  double margin_mm = 10.0;

  // box
  Vec3 box_size_mm{100.0, 100.0, 100.0};
  // sphere
  double sphere_radius_mm = 20.0;
  int sphere_subdivisions = 4;
  // corridor vertebra
  double body_radius_mm = 20.0;
  double body_height_mm = 24.0;
  double corridor_inner_radius_mm = 4.0;
  double corridor_length_mm = 45.0;
  double corridor_half_spacing_mm = 14.0;
  double corridor_convergence_deg = 8.0;
  double corridor_entry_y_mm = -40.0;
  double cortical_thickness_mm = 1.5;
  double annotation_depth_mm = 35.0;
  int corridor_segments = 64;

  /// Primary solid (box, sphere) or cancellous bone.
  double attenuation_per_mm = 0.02;
  double cortical_attenuation_per_mm = 0.05;
  /// Relative amplitude of seeded voxel texture in cancellous bone (0 = none).
  double texture_amplitude = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PhantomBundle {
  VoxelVolume volume;
  VertebraMesh mesh;
  AnnotationFile annotations;
  Vec3 target_centroid = Vec3::Zero();
  /// Analytic signed distance to the meshed solid (negative inside).
  std::function<double(const Vec3&)> analytic_sdf;
};

PhantomBundle build_phantom(const PhantomSpec& spec);

/// Building blocks, exposed for tests.
VertebraMesh make_box_mesh(const Vec3& center, const Vec3& size, const std::string& level = "L1");
VertebraMesh make_icosphere(const Vec3& center, double radius, int subdivisions,
                            const std::string& level = "L1");
/// Closed capped cylinder(s); each entry is (start, end) of the axis.
VertebraMesh make_cylinders_mesh(const std::vector<std::pair<Vec3, Vec3>>& axes, double radius,
                                 int segments, const std::string& level = "L1",
                                 std::vector<PedicleRegion> regions = {});

/// Largest |analytic SDF| over boundary voxels (solid voxels with a
/// non-solid 6-neighbor); measures voxelization error.
double max_surface_deviation(const PhantomBundle& b);

}  // namespace spinesim
