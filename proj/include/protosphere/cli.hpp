#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace protosphere::cli {

// Stable exit codes.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

/// Runs one subcommand. `args` excludes the program name. Output artifacts are
/// written to the paths given by flags; human-readable output goes to `out`,
/// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace protosphere::cli
