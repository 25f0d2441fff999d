#include "spinesim/mesh.hpp"

#include "spinesim/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

namespace spinesim {

std::string side_name(Side s) { return s == Side::Left ? "left" : "right"; }

Side parse_side(const std::string& s) {
  if (s == "left" || s == "0") return Side::Left;
  if (s == "right" || s == "1") return Side::Right;
  contract_error("invalid_side", "side must be 'left' or 'right', got '" + s + "'");
}

bool is_valid_level(const std::string& level) {
  if (level.size() < 2 || (level[0] != 'T' && level[0] != 'L')) return false;
  const std::string digits = level.substr(1);
  if (digits.empty() || digits.size() > 2 || !std::all_of(digits.begin(), digits.end(), ::isdigit)) {
    return false;
  }
  const int n = std::stoi(digits);
  return n >= 1 && n <= (level[0] == 'T' ? 12 : 5);
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Voronoi-region walk (Ericson, Real-Time Collision Detection 5.1.5).
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

VertebraMesh::VertebraMesh(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> triangles,
                           std::string level, std::vector<PedicleRegion> regions)
    : vertices_(std::move(vertices)),
      triangles_(std::move(triangles)),
      level_(std::move(level)),
      regions_(std::move(regions)) {
  validate();
  build();
}

void VertebraMesh::validate() const {
  if (!is_valid_level(level_)) contract_error("invalid_level", "unknown vertebral level '" + level_ + "'");
  if (triangles_.size() < 4) contract_error("degenerate_mesh", "mesh needs at least 4 triangles");
  const int nv = static_cast<int>(vertices_.size());
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : triangles_) {
    for (int k = 0; k < 3; ++k) {
      if (t[k] < 0 || t[k] >= nv) contract_error("degenerate_mesh", "triangle index out of range");
    }
    const Vec3 n = (vertices_[t[1]] - vertices_[t[0]]).cross(vertices_[t[2]] - vertices_[t[0]]);
    if (!(n.norm() > 1e-12)) contract_error("degenerate_mesh", "mesh contains a degenerate triangle");
    for (int k = 0; k < 3; ++k) ++directed[{t[k], t[(k + 1) % 3]}];
  }
  for (const auto& [edge, count] : directed) {
    const auto rev = directed.find({edge.second, edge.first});
    if (count != 1 || rev == directed.end() || rev->second != 1) {
      contract_error("degenerate_mesh", "mesh is not a closed, consistently oriented 2-manifold");
    }
  }
  if (!(enclosed_volume() > 0.0)) contract_error("degenerate_mesh", "mesh orientation is not outward");
  for (const auto& r : regions_) {
    if (!(r.radius_mm > 0.0)) contract_error("invalid_region", "pedicle region radius must be > 0");
  }
}

double VertebraMesh::enclosed_volume() const {
  double vol = 0.0;
  for (const auto& t : triangles_) {
    vol += vertices_[t[0]].dot(vertices_[t[1]].cross(vertices_[t[2]]));
  }
  return vol / 6.0;
}

Vec3 VertebraMesh::centroid() const {
  Vec3 c = Vec3::Zero();
  for (const auto& v : vertices_) c += v;
  return vertices_.empty() ? c : Vec3(c / static_cast<double>(vertices_.size()));
}

void VertebraMesh::build() {
  std::vector<Vec3> centroids(triangles_.size());
  for (std::size_t i = 0; i < triangles_.size(); ++i) {
    const auto& t = triangles_[i];
    centroids[i] = (vertices_[t[0]] + vertices_[t[1]] + vertices_[t[2]]) / 3.0;
  }
  order_.resize(triangles_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.clear();
  nodes_.reserve(2 * triangles_.size());
  build_node(0, static_cast<int>(order_.size()), centroids, 0);
  bbox_min_ = nodes_[0].lo;
  bbox_max_ = nodes_[0].hi;
}

int VertebraMesh::build_node(int begin, int end, const std::vector<Vec3>& centroids, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  Vec3 clo = lo, chi = hi;
  for (int i = begin; i < end; ++i) {
    for (int v : triangles_[order_[i]]) {
      lo = lo.cwiseMin(vertices_[v]);
      hi = hi.cwiseMax(vertices_[v]);
    }
    clo = clo.cwiseMin(centroids[order_[i]]);
    chi = chi.cwiseMax(centroids[order_[i]]);
  }
  nodes_[id].lo = lo;
  nodes_[id].hi = hi;
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= 4 || depth > 40) return id;

  int axis;
  (chi - clo).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return centroids[a][axis] < centroids[b][axis]; });
  const int left = build_node(begin, mid, centroids, depth + 1);
  const int right = build_node(mid, end, centroids, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

namespace {

double box_distance_sq(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  const Vec3 d = (lo - p).cwiseMax(Vec3::Zero()).cwiseMax(p - hi);
  return d.squaredNorm();
}

bool ray_hits_box(const Vec3& o, const Vec3& inv_dir, const Vec3& lo, const Vec3& hi, double t0,
                  double t1) {
  for (int a = 0; a < 3; ++a) {
    double ta = (lo[a] - o[a]) * inv_dir[a];
    double tb = (hi[a] - o[a]) * inv_dir[a];
    if (std::isnan(ta) || std::isnan(tb)) {
      // Ray parallel to and lying in a slab face.
      if (o[a] < lo[a] || o[a] > hi[a]) return false;
      continue;
    }
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1 + 1e-9) return false;
  }
  return true;
}

}  // namespace

ClosestPoint VertebraMesh::closest_point(const Vec3& p) const {
  if (nodes_.empty()) contract_error("degenerate_mesh", "query on an empty mesh");
  ClosestPoint best;
  double best_sq = std::numeric_limits<double>::infinity();
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[stack[--top]];
    if (box_distance_sq(p, n.lo, n.hi) > best_sq) continue;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const auto& t = triangles_[order_[i]];
        const Vec3 q = closest_point_on_triangle(p, vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]);
        const double d = (q - p).squaredNorm();
        if (d < best_sq || (d == best_sq && order_[i] < best.triangle)) {
          best_sq = d;
          best.point = q;
          best.triangle = order_[i];
        }
      }
      continue;
    }
    const Node& l = nodes_[n.left];
    const Node& r = nodes_[n.right];
    const double dl = box_distance_sq(p, l.lo, l.hi);
    const double dr = box_distance_sq(p, r.lo, r.hi);
    // Push the farther child first so the nearer one is visited next.
    if (dl <= dr) {
      stack[top++] = n.right;
      stack[top++] = n.left;
    } else {
      stack[top++] = n.left;
      stack[top++] = n.right;
    }
  }
  best.distance = std::sqrt(best_sq);
  return best;
}

double VertebraMesh::winding_number(const Vec3& p) const {
  if ((p - bbox_min_).minCoeff() < 0.0 || (bbox_max_ - p).minCoeff() < 0.0) return 0.0;
  // Sum of signed solid angles (Van Oosterom & Strackee).
  double total = 0.0;
  for (const auto& t : triangles_) {
    const Vec3 a = vertices_[t[0]] - p;
    const Vec3 b = vertices_[t[1]] - p;
    const Vec3 c = vertices_[t[2]] - p;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double num = a.dot(b.cross(c));
    const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * kPi);
}

double VertebraMesh::signed_distance(const Vec3& p) const {
  const double d = closest_point(p).distance;
  return contains(p) ? -d : d;
}

std::vector<RayHit> VertebraMesh::intersect_ray(const Vec3& origin, const Vec3& dir, double t_min,
                                                double t_max) const {
  std::vector<RayHit> hits;
  if (nodes_.empty()) return hits;
  const Vec3 inv(1.0 / dir.x(), 1.0 / dir.y(), 1.0 / dir.z());
  constexpr double kBaryTol = 1e-9;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[stack[--top]];
    if (!ray_hits_box(origin, inv, n.lo, n.hi, t_min, t_max)) continue;
    if (n.left >= 0) {
      stack[top++] = n.left;
      stack[top++] = n.right;
      continue;
    }
    for (int i = n.begin; i < n.end; ++i) {
      const auto& tri = triangles_[order_[i]];
      const Vec3& a = vertices_[tri[0]];
      const Vec3 e1 = vertices_[tri[1]] - a;
      const Vec3 e2 = vertices_[tri[2]] - a;
      const Vec3 pv = dir.cross(e2);
      const double det = e1.dot(pv);
      if (std::abs(det) < 1e-14) continue;
      const double inv_det = 1.0 / det;
      const Vec3 tv = origin - a;
      const double u = tv.dot(pv) * inv_det;
      if (u < -kBaryTol || u > 1.0 + kBaryTol) continue;
      const Vec3 qv = tv.cross(e1);
      const double v = dir.dot(qv) * inv_det;
      if (v < -kBaryTol || u + v > 1.0 + kBaryTol) continue;
      const double t = e2.dot(qv) * inv_det;
      if (t < t_min || t > t_max) continue;
      hits.push_back({t, e1.cross(e2).dot(dir) < 0.0});
    }
  }
  std::sort(hits.begin(), hits.end(), [](const RayHit& a, const RayHit& b) { return a.t < b.t; });
  return hits;
}

std::optional<double> VertebraMesh::first_entry(const Vec3& origin, const Vec3& dir, double t_max) const {
  if (contains(origin)) return 0.0;
  for (const RayHit& h : intersect_ray(origin, dir, -1e-9, t_max)) {
    if (h.entering) return std::max(0.0, h.t);
  }
  return std::nullopt;
}

VertebraMesh VertebraMesh::transformed(const Pose& pose) const {
  std::vector<Vec3> verts;
  verts.reserve(vertices_.size());
  for (const auto& v : vertices_) verts.push_back(pose.apply(v));
  std::vector<PedicleRegion> regions = regions_;
  for (auto& r : regions) {
    r.start = pose.apply(r.start);
    r.end = pose.apply(r.end);
  }
  return VertebraMesh(std::move(verts), triangles_, level_, std::move(regions));
}

namespace {

float read_f32(const char* p) {
  std::uint32_t u;
  std::memcpy(&u, p, 4);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void put_f32(std::string& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  char b[4];
  std::memcpy(b, &u, 4);
  out.append(b, 4);
}

}  // namespace

VertebraMesh load_stl(const std::filesystem::path& path, const std::string& level) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error("missing_file", "cannot open " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 84) contract_error("bad_stl", path.string() + ": truncated STL header");
  std::uint32_t count;
  std::memcpy(&count, data.data() + 80, 4);
  if constexpr (std::endian::native == std::endian::big) count = __builtin_bswap32(count);
  if (data.size() != 84 + 50ULL * count) {
    contract_error("bad_stl", path.string() + ": size does not match triangle count");
  }
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::map<std::tuple<float, float, float>, int> weld;
  for (std::uint32_t t = 0; t < count; ++t) {
    const char* rec = data.data() + 84 + 50ULL * t;
    std::array<int, 3> tri{};
    for (int k = 0; k < 3; ++k) {
      const char* v = rec + 12 + 12 * k;
      const auto key = std::make_tuple(read_f32(v), read_f32(v + 4), read_f32(v + 8));
      auto it = weld.find(key);
      if (it == weld.end()) {
        it = weld.emplace(key, static_cast<int>(vertices.size())).first;
        vertices.emplace_back(std::get<0>(key), std::get<1>(key), std::get<2>(key));
      }
      tri[k] = it->second;
    }
    triangles.push_back(tri);
  }
  return VertebraMesh(std::move(vertices), std::move(triangles), level);
}

void write_stl(const VertebraMesh& m, const std::filesystem::path& path) {
  std::string out(80, '\0');
  const std::string tag = "spinesim binary stl";
  std::memcpy(out.data(), tag.data(), tag.size());
  std::uint32_t count = static_cast<std::uint32_t>(m.triangles().size());
  if constexpr (std::endian::native == std::endian::big) count = __builtin_bswap32(count);
  out.append(reinterpret_cast<const char*>(&count), 4);
  for (const auto& t : m.triangles()) {
    const Vec3& a = m.vertices()[t[0]];
    const Vec3& b = m.vertices()[t[1]];
    const Vec3& c = m.vertices()[t[2]];
    const Vec3 n = (b - a).cross(c - a).normalized();
    for (const Vec3* v : {&n, &a, &b, &c}) {
      for (int k = 0; k < 3; ++k) put_f32(out, static_cast<float>((*v)[k]));
    }
    out.append(2, '\0');
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) io_error("write_failed", "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) io_error("write_failed", "short write to " + path.string());
}

}  // namespace spinesim
