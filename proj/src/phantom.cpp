#include "spinesim/phantom.hpp"

#include "spinesim/error.hpp"
#include "spinesim/rng.hpp"

#include <cmath>
#include <map>

namespace spinesim {

PhantomKind parse_phantom_kind(const std::string& s) {
  if (s == "box") return PhantomKind::Box;
  if (s == "sphere") return PhantomKind::Sphere;
  if (s == "corridor-vertebra") return PhantomKind::CorridorVertebra;
  contract_error("invalid_phantom", "unknown phantom kind '" + s + "'");
}

std::string phantom_kind_name(PhantomKind k) {
  switch (k) {
    case PhantomKind::Box: return "box";
    case PhantomKind::Sphere: return "sphere";
    case PhantomKind::CorridorVertebra: return "corridor-vertebra";
  }
  return "?";
}

void PhantomSpec::validate() const {
  const auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(voxel_mm) || !(margin_mm >= 0.0)) contract_error("invalid_phantom", "voxel size must be > 0");
  if (!(attenuation_per_mm >= 0.0) || !(cortical_attenuation_per_mm >= 0.0)) {
    contract_error("invalid_phantom", "attenuations must be >= 0");
  }
  if (!(texture_amplitude >= 0.0 && texture_amplitude < 1.0)) {
    contract_error("invalid_phantom", "texture amplitude must be in [0, 1)");
  }
  switch (kind) {
    case PhantomKind::Box:
      if (!(box_size_mm.minCoeff() > 0.0)) contract_error("invalid_phantom", "box dimensions must be > 0");
      break;
    case PhantomKind::Sphere:
      if (!positive(sphere_radius_mm)) contract_error("invalid_phantom", "sphere radius must be > 0");
      if (sphere_subdivisions < 0 || sphere_subdivisions > 6) {
        contract_error("invalid_phantom", "sphere subdivisions must be in [0, 6]");
      }
      break;
    case PhantomKind::CorridorVertebra: {
      if (!positive(body_radius_mm) || !positive(body_height_mm) || !positive(corridor_inner_radius_mm) ||
          !positive(corridor_length_mm) || !positive(cortical_thickness_mm) || !positive(annotation_depth_mm)) {
        contract_error("invalid_phantom", "corridor phantom dimensions must be > 0");
      }
      const double outer = corridor_inner_radius_mm + cortical_thickness_mm;
      if (!(outer < body_radius_mm)) {
        contract_error("invalid_phantom", "corridor radius must be smaller than the body radius");
      }
      const double closest = corridor_half_spacing_mm -
                             corridor_length_mm * std::sin(deg_to_rad(corridor_convergence_deg));
      if (!(closest > outer)) contract_error("invalid_phantom", "left and right corridors would intersect");
      if (!(annotation_depth_mm < corridor_length_mm)) {
        contract_error("invalid_phantom", "annotation depth must stay inside the corridor");
      }
      if (corridor_segments < 8) contract_error("invalid_phantom", "corridor needs >= 8 segments");
      break;
    }
  }
  if (!is_valid_level(level)) contract_error("invalid_level", "unknown vertebral level '" + level + "'");
}

VertebraMesh make_box_mesh(const Vec3& center, const Vec3& size, const std::string& level) {
  const Vec3 h = 0.5 * size;
  std::vector<Vec3> v;
  for (int k = 0; k < 8; ++k) {
    v.push_back(center + Vec3((k & 1) ? h.x() : -h.x(), (k & 2) ? h.y() : -h.y(), (k & 4) ? h.z() : -h.z()));
  }
  // Outward-facing quads split in two.
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  std::vector<std::array<int, 3>> t;
  for (const auto& q : quads) {
    t.push_back({q[0], q[1], q[2]});
    t.push_back({q[0], q[2], q[3]});
  }
  return VertebraMesh(std::move(v), std::move(t), level);
}

VertebraMesh make_icosphere(const Vec3& center, double radius, int subdivisions, const std::string& level) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
                         {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
                         {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> t = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                       {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                       {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                       {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    const auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(t.size() * 4);
    for (const auto& f : t) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    t = std::move(next);
  }
  for (auto& p : v) p = center + radius * p;
  return VertebraMesh(std::move(v), std::move(t), level);
}

VertebraMesh make_cylinders_mesh(const std::vector<std::pair<Vec3, Vec3>>& axes, double radius,
                                 int segments, const std::string& level,
                                 std::vector<PedicleRegion> regions) {
  std::vector<Vec3> v;
  std::vector<std::array<int, 3>> t;
  for (const auto& [a, b] : axes) {
    const Vec3 dir = (b - a).normalized();
    const Mat3 frame = frame_from_z(dir);
    const int base = static_cast<int>(v.size());
    // Layout: [start ring (n)] [end ring (n)] [start center] [end center]
    for (int end = 0; end < 2; ++end) {
      const Vec3& c = end ? b : a;
      for (int s = 0; s < segments; ++s) {
        const double th = 2.0 * kPi * s / segments;
        v.push_back(c + radius * (std::cos(th) * frame.col(0) + std::sin(th) * frame.col(1)));
      }
    }
    const int ca = static_cast<int>(v.size());
    v.push_back(a);
    const int cb = static_cast<int>(v.size());
    v.push_back(b);
    for (int s = 0; s < segments; ++s) {
      const int s1 = (s + 1) % segments;
      const int a0 = base + s, a1 = base + s1;
      const int b0 = base + segments + s, b1 = base + segments + s1;
      t.push_back({a0, a1, b1});
      t.push_back({a0, b1, b0});
      t.push_back({ca, a1, a0});  // start cap faces -dir
      t.push_back({cb, b0, b1});  // end cap faces +dir
    }
  }
  return VertebraMesh(std::move(v), std::move(t), level, std::move(regions));
}

namespace {

double box_sdf(const Vec3& p, const Vec3& center, const Vec3& half) {
  const Vec3 q = (p - center).cwiseAbs() - half;
  return q.cwiseMax(Vec3::Zero()).norm() + std::min(q.maxCoeff(), 0.0);
}

double capped_cylinder_sdf(const Vec3& p, const Vec3& a, const Vec3& b, double r) {
  const Vec3 axis = b - a;
  const double len = axis.norm();
  const Vec3 d = axis / len;
  const double t = (p - a).dot(d);
  const double radial = ((p - a) - t * d).norm() - r;
  const double axial = std::max(-t, t - len);
  return std::min(std::max(radial, axial), 0.0) +
         Eigen::Vector2d(std::max(radial, 0.0), std::max(axial, 0.0)).norm();
}

double segment_point_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

/// Grid whose cell faces fall on multiples of `h` around `center`, covering
/// [center - half_extent, center + half_extent] at least.
VoxelVolume grid_around(const Vec3& center, const Vec3& half_extent, double h) {
  std::array<int, 3> dims{};
  Vec3 origin;
  for (int a = 0; a < 3; ++a) {
    const int half_cells = static_cast<int>(std::ceil(half_extent[a] / h - 1e-9));
    dims[a] = 2 * std::max(half_cells, 1);
    origin[a] = center[a] - half_cells * h + 0.5 * h;
  }
  return VoxelVolume(dims, Vec3::Constant(h), origin);
}

}  // namespace

PhantomBundle build_phantom(const PhantomSpec& spec) {
  spec.validate();
  PhantomBundle out;
  out.target_centroid = spec.center;
  const double h = spec.voxel_mm;
  Rng rng(spec.seed);

  switch (spec.kind) {
    case PhantomKind::Box: {
      const Vec3 half = 0.5 * spec.box_size_mm;
      out.mesh = make_box_mesh(spec.center, spec.box_size_mm, spec.level);
      out.analytic_sdf = [c = spec.center, half](const Vec3& p) { return box_sdf(p, c, half); };
      out.volume = grid_around(spec.center, half + Vec3::Constant(spec.margin_mm), h);
      break;
    }
    case PhantomKind::Sphere: {
      out.mesh = make_icosphere(spec.center, spec.sphere_radius_mm, spec.sphere_subdivisions, spec.level);
      out.analytic_sdf = [c = spec.center, r = spec.sphere_radius_mm](const Vec3& p) { return (p - c).norm() - r; };
      out.volume = grid_around(spec.center, Vec3::Constant(spec.sphere_radius_mm + spec.margin_mm), h);
      break;
    }
    case PhantomKind::CorridorVertebra: {
      const double th = deg_to_rad(spec.corridor_convergence_deg);
      const Vec3 c = spec.center;
      const double r = spec.corridor_inner_radius_mm;
      std::vector<std::pair<Vec3, Vec3>> axes;
      std::vector<PedicleRegion> regions;
      for (Side side : {Side::Left, Side::Right}) {
        const double sx = side == Side::Left ? -1.0 : 1.0;
        const Vec3 entry = c + Vec3(sx * spec.corridor_half_spacing_mm, spec.corridor_entry_y_mm, 0.0);
        const Vec3 axis(-sx * std::sin(th), std::cos(th), 0.0);
        const Vec3 end = entry + spec.corridor_length_mm * axis;
        axes.emplace_back(entry, end);
        regions.push_back({side, entry, end, r});
        out.annotations.entries.push_back({spec.level, side, entry, axis, spec.annotation_depth_mm});
      }
      out.annotations.pedicle_regions = regions;
      out.mesh = make_cylinders_mesh(axes, r, spec.corridor_segments, spec.level, regions);
      out.analytic_sdf = [axes, r](const Vec3& p) {
        double d = std::numeric_limits<double>::infinity();
        for (const auto& [a, b] : axes) d = std::min(d, capped_cylinder_sdf(p, a, b, r));
        return d;
      };
      // Body capsule along z plus the posterior corridor reach.
      const double reach_y = std::max(std::abs(spec.corridor_entry_y_mm), spec.body_radius_mm);
      const double reach_x = std::max(spec.body_radius_mm, spec.corridor_half_spacing_mm + r + spec.cortical_thickness_mm);
      const double reach_z = std::max(0.5 * spec.body_height_mm + spec.body_radius_mm * 0.5, r + spec.cortical_thickness_mm);
      out.volume = grid_around(c, Vec3(reach_x, reach_y, reach_z) + Vec3::Constant(spec.margin_mm), h);

      const double half_h = 0.5 * spec.body_height_mm;
      const double cap_r = 0.5 * spec.body_radius_mm;
      const double outer = r + spec.cortical_thickness_mm;
      auto& vol = out.volume;
      for (int k = 0; k < vol.dims()[2]; ++k) {
        for (int j = 0; j < vol.dims()[1]; ++j) {
          for (int i = 0; i < vol.dims()[0]; ++i) {
            const Vec3 p = vol.voxel_center(i, j, k);
            const Vec3 q = p - c;
            // Capsule: radius body_radius around the z segment, rounded ends.
            const double rho = std::hypot(q.x(), q.y());
            const double dz = std::max(std::abs(q.z()) - half_h, 0.0);
            const bool in_body = rho <= spec.body_radius_mm && dz <= cap_r &&
                                 (dz == 0.0 || rho * rho / (spec.body_radius_mm * spec.body_radius_mm) +
                                                       dz * dz / (cap_r * cap_r) <= 1.0);
            double d_axis = std::numeric_limits<double>::infinity();
            for (const auto& [a, b] : axes) d_axis = std::min(d_axis, segment_point_distance(p, a, b));
            std::uint8_t label = 0;
            if (d_axis <= r || in_body) label = 1;
            if (d_axis > r && d_axis <= outer) label = 2;
            vol.label(i, j, k) = label;
          }
        }
      }
      break;
    }
  }

  // Fill values (and labels for single-material kinds).
  auto& vol = out.volume;
  for (int k = 0; k < vol.dims()[2]; ++k) {
    for (int j = 0; j < vol.dims()[1]; ++j) {
      for (int i = 0; i < vol.dims()[0]; ++i) {
        if (spec.kind != PhantomKind::CorridorVertebra) {
          vol.label(i, j, k) = out.analytic_sdf(vol.voxel_center(i, j, k)) <= 0.0 ? 1 : 0;
        }
        const std::uint8_t l = vol.label(i, j, k);
        double mu = l == 1 ? spec.attenuation_per_mm : l == 2 ? spec.cortical_attenuation_per_mm : 0.0;
        if (l == 1 && spec.texture_amplitude > 0.0) {
          mu *= 1.0 + spec.texture_amplitude * (rng.uniform() - 0.5);
        }
        vol.value(i, j, k) = static_cast<float>(mu);
      }
    }
  }
  return out;
}

double max_surface_deviation(const PhantomBundle& b) {
  const auto& v = b.volume;
  const auto solid = [&](int i, int j, int k) {
    if (i < 0 || j < 0 || k < 0 || i >= v.dims()[0] || j >= v.dims()[1] || k >= v.dims()[2]) return false;
    return b.analytic_sdf(v.voxel_center(i, j, k)) <= 0.0;
  };
  double worst = 0.0;
  for (int k = 0; k < v.dims()[2]; ++k) {
    for (int j = 0; j < v.dims()[1]; ++j) {
      for (int i = 0; i < v.dims()[0]; ++i) {
        if (!solid(i, j, k)) continue;
        if (solid(i - 1, j, k) && solid(i + 1, j, k) && solid(i, j - 1, k) && solid(i, j + 1, k) &&
            solid(i, j, k - 1) && solid(i, j, k + 1)) {
          continue;
        }
        worst = std::max(worst, std::abs(b.analytic_sdf(v.voxel_center(i, j, k))));
      }
    }
  }
  return worst;
}

}  // namespace spinesim
