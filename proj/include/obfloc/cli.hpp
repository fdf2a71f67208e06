#pragma once

#include <iosfwd>

namespace obfloc {

// Exit codes of the obfloc command line.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNoneLocalized = 3,
};

// Runs one subcommand (obfuscate, localize, evaluate, align, synth).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace obfloc
