#pragma once

#include <string>
#include <string_view>

namespace reflectsql {

/// Hex-encoded SHA-256 of arbitrary bytes.
std::string sha256_hex(std::string_view data);

}  // namespace reflectsql
