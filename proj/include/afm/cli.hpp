#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace afm {

/// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

int run_cli(int argc, char** argv);
/// Same as run_cli with args[0] as the program name; messages go to `out`/`err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace afm
