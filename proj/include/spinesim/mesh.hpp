#pragma once

#include "spinesim/geometry.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spinesim {

enum class Side { Left = 0, Right = 1 };
std::string side_name(Side s);
Side parse_side(const std::string& s);

/// Vertebral level tag, T1..T12 or L1..L5.
bool is_valid_level(const std::string& level);

/// Capsule marking one pedicle; an axis must pass within `radius_mm` of the
/// segment [start, end] to count as intra-pedicular.
struct PedicleRegion {
  Side side = Side::Left;
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::Zero();
  double radius_mm = 0.0;
};

struct ClosestPoint {
  double distance = 0.0;
  Vec3 point = Vec3::Zero();
  int triangle = -1;
};

struct RayHit {
  double t = 0.0;
  bool entering = false;
};

/// Closed, consistently outward-oriented triangle mesh with a bounding
/// volume hierarchy for nearest-point and ray queries. Immutable after
/// construction; all queries are thread-safe.
class VertebraMesh {
 public:
  VertebraMesh() = default;
  /// Validates the mesh (closed 2-manifold, outward orientation, no
  /// degenerate triangles) and builds the acceleration structure.
  VertebraMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles,
               std::string level = "L1", std::vector<PedicleRegion> regions = {});

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::string& level() const { return level_; }
  const std::vector<PedicleRegion>& pedicle_regions() const { return regions_; }
  bool empty() const { return triangles_.empty(); }

  Vec3 bbox_min() const { return bbox_min_; }
  Vec3 bbox_max() const { return bbox_max_; }
  Vec3 centroid() const;
  double enclosed_volume() const;

  ClosestPoint closest_point(const Vec3& p) const;
  /// Generalized winding number: ~1 inside, ~0 outside.
  double winding_number(const Vec3& p) const;
  bool contains(const Vec3& p) const { return winding_number(p) >= 0.5; }
  /// Distance to the surface, negative inside.
  double signed_distance(const Vec3& p) const;

  /// All surface crossings of origin + t * dir for t in [t_min, t_max], sorted by t.
  std::vector<RayHit> intersect_ray(const Vec3& origin, const Vec3& dir, double t_min,
                                    double t_max) const;
  /// Smallest t in [0, t_max] at which the axis is inside the mesh.
  std::optional<double> first_entry(const Vec3& origin, const Vec3& dir, double t_max) const;

  /// Returns a copy rigidly moved by `pose` (regions included).
  VertebraMesh transformed(const Pose& pose) const;

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;  // children; -1 for leaves
    int begin = 0, end = 0;     // range into order_
  };

  void validate() const;
  void build();
  int build_node(int begin, int end, const std::vector<Vec3>& centroids, int depth);

  std::vector<Vec3> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::string level_;
  std::vector<PedicleRegion> regions_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  Vec3 bbox_min_ = Vec3::Zero();
  Vec3 bbox_max_ = Vec3::Zero();
};

/// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Binary STL; vertices are welded by exact coordinate match on load.
VertebraMesh load_stl(const std::filesystem::path& path, const std::string& level = "L1");
void write_stl(const VertebraMesh& m, const std::filesystem::path& path);

}  // namespace spinesim
