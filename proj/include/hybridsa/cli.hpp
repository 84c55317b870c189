#pragma once

// Command-line driver: preprocess, train-glove, grid-search, train,
// evaluate, predict.

#include <iosfwd>
#include <string>
#include <vector>

namespace hybridsa {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// `args` excludes the program name. Returns the process exit status.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hybridsa
