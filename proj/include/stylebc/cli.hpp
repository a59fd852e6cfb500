#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stylebc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand. `args` excludes the program name. Usage errors print
/// the command grammar to `err` and return kExitUsage; any other error is
/// reported on `err` with kExitFailure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace stylebc::cli
