#pragma once

#include <ostream>
#include <span>
#include <string>

namespace tslt {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitUsage = 2,
    kExitData = 3,
    kExitNumeric = 4,
};

/// Runs one subcommand (train, evaluate, predict, synth, inspect). `args`
/// excludes the program name.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace tslt
