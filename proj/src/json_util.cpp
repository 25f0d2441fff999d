#include "spinesim/json_util.hpp"

#include "spinesim/error.hpp"

#include <fstream>

namespace spinesim {

using nlohmann::json;

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) io_error("missing_file", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    contract_error("malformed_metadata", path.string() + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) io_error("write_failed", "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) io_error("write_failed", "short write to " + path.string());
}

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) contract_error("malformed_metadata", "expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Trajectory trajectory_from_json(const json& j) {
  Trajectory t;
  try {
    t.entry = vec3_from_json(j.at("entry_mm"));
    t.direction = vec3_from_json(j.at("direction"));
    t.depth_mm = j.at("depth_mm").get<double>();
  } catch (const json::exception& e) {
    contract_error("malformed_metadata", std::string("trajectory: ") + e.what());
  }
  if (t.direction.norm() > 0.0) t.direction.normalize();
  t.validate();
  return t;
}

json to_json(const Trajectory& t) {
  return {{"entry_mm", to_json(t.entry)}, {"direction", to_json(t.direction)}, {"depth_mm", t.depth_mm}};
}

}  // namespace spinesim
