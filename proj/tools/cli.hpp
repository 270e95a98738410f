#pragma once

#include <iosfwd>

namespace msplit::cli {

enum ExitCode : int {
    kOk = 0,
    kConfigError = 2,
    kIoError = 3,
    kNumericalError = 4,
};

/// Entry point for the `msplit` executable: subcommands analyze, simulate
/// and ecdf. Never throws; failures map to the exit codes above.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace msplit::cli
