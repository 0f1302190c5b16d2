#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace vemr {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view encoded);

} // namespace vemr
