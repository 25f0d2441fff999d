#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace spinesim {

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
/// Throws Error("bad_base64") on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace spinesim
