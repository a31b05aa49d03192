#pragma once

#include <string>
#include <vector>

namespace poolformer::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitArgument = 2;
inline constexpr int kExitFormat = 3;

/// Runs one command. args excludes the program name. Errors are reported on
/// stderr and mapped to exit codes; nothing throws out of here.
int run_cli(const std::vector<std::string>& args);

}  // namespace poolformer::cli
