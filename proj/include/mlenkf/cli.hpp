#pragma once

// Command-line front end shared by the `mlenkf` tool and the tests.
//
//   mlenkf <kalman|enkf|mlenkf|benchmark|rates> --config <path> [--seed <u64>]
//          [--out <path>] [--budget <real> | --epsilon <real>] [--threads <n>]
//          [--manifest <path>] [--zero-wall-time]
//
// `--seed`, `--out` and `--threads` take precedence over run.seed, run.output
// and run.threads in the config file. `--budget` and `--epsilon` replace both
// allocation keys of the config.

#include <iosfwd>
#include <string>
#include <vector>

namespace mlenkf {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

inline constexpr const char* kVersion = "1.0.0";

/// Runs one command. `args` excludes the program name. Results go to the
/// output path, or to `out` when none is given; diagnostics go to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mlenkf
