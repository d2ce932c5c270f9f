#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace essayfb::text {

std::string_view trim(std::string_view s);

/// Number of Unicode code points in UTF-8 text. Stray continuation bytes
/// count as one character each.
std::size_t utf8_length(std::string_view s);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

std::string to_lower(std::string_view s);

}  // namespace essayfb::text

namespace essayfb::text {

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

}  // namespace essayfb::text
