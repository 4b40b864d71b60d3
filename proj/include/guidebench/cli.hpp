#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace guidebench {

/// Stable process exit codes.
enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 1,
    kExitPartial = 2,
    kExitStorage = 3,
};

/// Runs the command line `args` (program name excluded) and returns the exit code.
/// Reports go to `out`; errors go to `err` as one JSON object per line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace guidebench
