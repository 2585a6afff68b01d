#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vfl::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_validation = 1;
inline constexpr int exit_runtime = 2;

/// Entry point of the `vflsim` tool; `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vfl::cli
