#pragma once

#include <ostream>

namespace embshift::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_data_error = 1,
  exit_usage = 2,
  exit_shift = 3,
  exit_property_failure = 4,
};

/// Entry point of the `embshift` tool. Reports go to `out`, diagnostics to
/// `err`; the return value is the process exit code.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace embshift::cli
