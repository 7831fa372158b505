#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gradlens::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // assertion or tolerance failure, divergence
inline constexpr int kExitUsage = 2;    // bad arguments, config or input file

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gradlens::cli
