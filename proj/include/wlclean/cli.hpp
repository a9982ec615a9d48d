#pragma once

#include <exception>
#include <string>
#include <vector>

namespace wlclean::cli {

/// Exit codes of the `wlclean` tool.
enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,      // configuration or command-line error
    kData = 3,       // malformed, inconsistent or unreadable data
    kNumerical = 4,  // degenerate embedding, collapsed training, failed calibration
};

[[nodiscard]] int exit_code_for(const std::exception& e);

/// Runs the tool; `args[0]` is the program name.
int run(const std::vector<std::string>& args);

}  // namespace wlclean::cli
