#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace evalign::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;    // bad arguments, config, or input files
inline constexpr int kExitRuntime = 3;  // divergence or other runtime failure

/// Runs the command line `args` (args[0] is the program name). Machine
/// output goes to files; `out` only receives --print-config and --help,
/// `err` receives progress and diagnostics.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace evalign::cli
