#pragma once

#include <string>
#include <string_view>

namespace srlf {

// Lowercase hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

}  // namespace srlf
