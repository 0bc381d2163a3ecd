#pragma once

// Command-line surface: dataset generation, verification, simulation, the
// end-to-end run pipeline, scoring, and analysis. All commands are driven
// through run_cli so tests can exercise the real argument parsing and exit
// codes without spawning a process.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dwlab::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit-code classes. Every failure mode maps to one of these.
inline constexpr int kExitSuccess = 0;      // command completed
inline constexpr int kExitInternal = 1;     // unexpected internal error
inline constexpr int kExitUsage = 2;        // bad flags or flag values
inline constexpr int kExitPreflight = 3;    // inputs/environment unusable
inline constexpr int kExitTaskFailure = 4;  // run finished but units failed
inline constexpr int kExitCheckFailure = 5; // a verification check failed

// FNV-1a 64-bit hash, hex-encoded; used to fingerprint the effective run
// configuration inside run_meta.json.
std::string fnv1a64_hex(std::string_view data);

// Executes one command. `args` excludes the program name. Normal output goes
// to `out`, diagnostics to `err`; the return value is one of the exit codes
// above.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

// main() adapter: forwards argv[1..] to the stream overload with std::cout
// and std::cerr.
int run_cli(int argc, char** argv);

}  // namespace dwlab::cli
