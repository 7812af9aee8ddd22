#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wsseg::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kDataError = 3,
  kNumericError = 4,
};

/// Runs the `wsseg` command line (args[0] is the program name). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wsseg::cli
