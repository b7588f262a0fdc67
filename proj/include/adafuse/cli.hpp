#pragma once

#include <string>
#include <vector>

namespace adafuse {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitDependency = 3,
  kExitData = 4,
};

/// Entry point shared by the binary and the tests. args[0] is the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace adafuse
