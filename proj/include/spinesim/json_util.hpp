#pragma once

#include "spinesim/geometry.hpp"
#include "spinesim/safety.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace spinesim {

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline; output is byte-stable for equal input.
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);

Vec3 vec3_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Vec3& v);

Trajectory trajectory_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Trajectory& t);

}  // namespace spinesim
