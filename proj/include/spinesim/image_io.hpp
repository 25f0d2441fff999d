#pragma once

#include "spinesim/drr.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace spinesim {

/// 16-bit grayscale PNG; stored value = round(display * 65535).
std::vector<std::uint8_t> encode_png16(const RadiographImage& img);
void write_png16(const RadiographImage& img, const std::filesystem::path& path);

/// Reads an 8- or 16-bit grayscale PNG into display values in [0, 1].
RadiographImage decode_png(const std::vector<std::uint8_t>& bytes);
RadiographImage read_png(const std::filesystem::path& path);

}  // namespace spinesim
