#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wpcm::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 1,
  kDataError = 2,
  kNumericError = 3,
};

// Runs one command line (args[0] is the program name). Messages go to
// `out` and `err`; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wpcm::cli
