#pragma once

#include <ostream>

namespace wsp::cli {

/// Exit codes of the wsp tool.
enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumerical = 4 };

/// Parses argv and runs one subcommand. Normal output goes to `out`,
/// warnings and errors to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wsp::cli
