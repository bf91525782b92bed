#pragma once

#include <string>
#include <string_view>

namespace timecap {

/// SHA-256 of `data`, lowercase hex. Used for response-cache keys, parameter
/// checkpoint digests, and artifact config digests.
std::string sha256_hex(std::string_view data);

}  // namespace timecap
