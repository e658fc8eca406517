#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace logonet::cli {

enum ExitCode : int { kSuccess = 0, kModuleError = 1, kUsageError = 2 };

// Parses `args` (without the program name) and runs one subcommand.
// Human summaries go to `out`, diagnostics and usage text to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace logonet::cli
