#pragma once

#include <iosfwd>

namespace adaptkan {

enum ExitCode : int {
    kExitOk = 0,
    kExitNumerical = 1,
    kExitConfig = 2,
    kExitIo = 3,
};

/// Entry point of the command-line tool. Returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace adaptkan
