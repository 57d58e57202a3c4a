#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace trae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitModel = 4;

/// Runs one subcommand. `args` excludes the program name. Messages and logs go
/// to `err`; help text goes to `out`.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace trae::cli
