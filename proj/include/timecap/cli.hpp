#pragma once

#include <string>
#include <vector>

namespace timecap::cli {

/// Entry point for the `timecap` tool. `args` excludes argv[0].
/// Exit codes: 0 success, 2 config error, 3 missing/stale artifact,
/// 4 provider failure, 5 internal invariant violation.
int run(const std::vector<std::string>& args);

}  // namespace timecap::cli
