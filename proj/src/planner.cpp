#include "spinesim/planner.hpp"

#include "parallel.hpp"
#include "spinesim/error.hpp"
#include "spinesim/json_util.hpp"

#include <cmath>
#include <fstream>

namespace spinesim {

using nlohmann::json;

void PedicleAnnotation::validate() const {
  if (!is_valid_level(level)) contract_error("invalid_level", "unknown vertebral level '" + level + "'");
  if (std::abs(axis.norm() - 1.0) > 1e-6) contract_error("invalid_annotation", "annotation axis must be unit-norm");
  if (!(depth_mm > 0.0)) contract_error("invalid_annotation", "annotation depth must be > 0");
}

const PedicleAnnotation* AnnotationFile::find(const std::string& level, Side side) const {
  for (const auto& e : entries) {
    if (e.level == level && e.side == side) return &e;
  }
  return nullptr;
}

AnnotationFile load_annotations(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  AnnotationFile out;
  try {
    for (const auto& e : j.at("entries")) {
      PedicleAnnotation a;
      a.level = e.at("level").get<std::string>();
      a.side = parse_side(e.at("side").get<std::string>());
      a.entry = vec3_from_json(e.at("entry_mm"));
      a.axis = vec3_from_json(e.at("axis"));
      a.depth_mm = e.at("depth_mm").get<double>();
      a.validate();
      out.entries.push_back(a);
    }
    if (j.contains("pedicle_regions")) {
      for (const auto& r : j.at("pedicle_regions")) {
        PedicleRegion reg;
        reg.side = parse_side(r.at("side").get<std::string>());
        reg.start = vec3_from_json(r.at("start_mm"));
        reg.end = vec3_from_json(r.at("end_mm"));
        reg.radius_mm = r.at("radius_mm").get<double>();
        out.pedicle_regions.push_back(reg);
      }
    }
  } catch (const json::exception& e) {
    contract_error("malformed_metadata", path.string() + ": " + e.what());
  }
  return out;
}

void write_annotations(const AnnotationFile& a, const std::filesystem::path& path) {
  json j;
  j["entries"] = json::array();
  for (const auto& e : a.entries) {
    j["entries"].push_back({{"level", e.level},
                            {"side", side_name(e.side)},
                            {"entry_mm", to_json(e.entry)},
                            {"axis", to_json(e.axis)},
                            {"depth_mm", e.depth_mm}});
  }
  if (!a.pedicle_regions.empty()) {
    j["pedicle_regions"] = json::array();
    for (const auto& r : a.pedicle_regions) {
      j["pedicle_regions"].push_back({{"side", side_name(r.side)},
                                      {"start_mm", to_json(r.start)},
                                      {"end_mm", to_json(r.end)},
                                      {"radius_mm", r.radius_mm}});
    }
  }
  write_json_file(j, path);
}

std::vector<Trajectory> generate_candidates(const PedicleAnnotation& a, const CandidateGrid& grid) {
  if (!(grid.step_mm > 0.0)) contract_error("invalid_grid", "candidate grid step must be > 0");
  if (!(grid.half_extent_mm >= 0.0)) contract_error("invalid_grid", "candidate grid half-extent must be >= 0");
  a.validate();
  const Mat3 frame = frame_from_z(a.axis);
  const Vec3 u = frame.col(0), v = frame.col(1);
  const int half = static_cast<int>(std::floor(grid.half_extent_mm / grid.step_mm + 1e-9));

  std::vector<Trajectory> out;
  out.push_back(a.trajectory());
  for (int r = -half; r <= half; ++r) {
    for (int c = -half; c <= half; ++c) {
      if (r == 0 && c == 0) continue;
      Trajectory t = a.trajectory();
      t.entry = a.entry + (c * grid.step_mm) * u + (r * grid.step_mm) * v;
      out.push_back(t);
    }
  }
  return out;
}

Selection filter_and_select(const std::vector<Trajectory>& candidates, const VertebraMesh& m,
                            const SelectionCriteria& criteria) {
  if (candidates.empty()) contract_error("no_candidates", "candidate list is empty");
  Selection sel;
  sel.audit.resize(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    CandidateAudit& a = sel.audit[i];
    a.index = i;
    a.trajectory = candidates[i];
    const BreachReport r = assess_cannula(m, candidates[i], criteria.cannula_radius_mm, criteria.sampling);
    a.grade = r.grade;
    a.max_breach_mm = r.max_breach_mm;
    a.mean_wall_distance_mm = r.mean_wall_distance();
    a.survived = r.grade == Grade::A && a.mean_wall_distance_mm >= criteria.min_mean_wall_distance_mm;
  }
  for (const auto& a : sel.audit) {
    if (!a.survived) continue;
    if (!sel.selected || a.mean_wall_distance_mm > sel.audit[*sel.selected].mean_wall_distance_mm) {
      sel.selected = a.index;
    }
  }
  return sel;
}

double entry_point_distance(const Trajectory& pred, const Trajectory& ref, const VertebraMesh& m) {
  pred.validate();
  ref.validate();
  const auto tp = m.first_entry(pred.entry, pred.direction, pred.depth_mm);
  const auto tr = m.first_entry(ref.entry, ref.direction, ref.depth_mm);
  if (!tp) contract_error("misses_mesh", "predicted trajectory does not intersect the mesh");
  if (!tr) contract_error("misses_mesh", "reference trajectory does not intersect the mesh");
  return ((pred.entry + *tp * pred.direction) - (ref.entry + *tr * ref.direction)).norm();
}

double angular_offset(const Trajectory& pred, const Trajectory& ref) {
  return angle_between_deg(pred.direction, ref.direction);
}

}  // namespace spinesim
