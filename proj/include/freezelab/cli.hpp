#pragma once

// The `freezelab` command line, as a library so tests can drive it in-process.
//
// Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 at_risk
// (freeze-health only).

#include <iosfwd>
#include <string>
#include <vector>

namespace freezelab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitAtRisk = 3;

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace freezelab::cli
