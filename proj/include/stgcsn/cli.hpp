#pragma once

namespace stgcsn {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumeric = 3,
};

/// Entry point of the `stgcsn` tool; callable in-process.
int run_cli(int argc, const char* const* argv);

}  // namespace stgcsn
