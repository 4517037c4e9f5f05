#pragma once

#include <string>
#include <vector>

namespace mct {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

/// Entry point of the `mctangent` command. Returns the process exit code.
int run_cli(int argc, const char* const* argv);
/// Same, with the arguments after the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace mct
