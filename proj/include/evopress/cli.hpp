#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace evopress {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitOracle = 3,
};

/// Runs the command line `args` (without the program name). Results go to
/// `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

/// Applies EVOPRESS_LOG (error, info or debug) to a stderr logger.
void configure_logging();

}  // namespace evopress
