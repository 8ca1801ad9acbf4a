#pragma once

// Command-line front end: collect, train, eval, sweep and replay.
// Exit codes: 0 success, 2 validation or usage error, 3 I/O error.

#include <iosfwd>
#include <string>
#include <vector>

namespace ttcshield::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kSeedEnvVar = "TTCSHIELD_SEED";

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ttcshield::cli
