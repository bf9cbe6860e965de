#pragma once

#include <ostream>

namespace s4drc::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kInternalError = 1;
inline constexpr int kInputError = 2;

/// Runs the `s4drc` command line. Normal output goes to `out`, diagnostics
/// and warnings to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace s4drc::cli
