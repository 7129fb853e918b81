#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace panostitch::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes: 0 success, 1 usage error, 2 runtime or domain error.
enum ExitCode { kOk = 0, kUsage = 1, kFailure = 2 };

/// Runs one subcommand (render, fit-color, stitch, eval, gradcheck, version).
/// `args` excludes the program name. Results go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace panostitch::cli
