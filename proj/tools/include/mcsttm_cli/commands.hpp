#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mcsttm::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // gradcheck failures and unexpected errors
  kExitInput = 2,
  kExitDivergence = 3,
  kExitCheckpoint = 4,
};

// Parses `args` (without the program name) and runs one command.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mcsttm::cli
