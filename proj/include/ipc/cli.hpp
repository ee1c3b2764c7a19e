#pragma once

// Command-line front end. Subcommands: scenes, synth, train, dehaze, eval,
// sweep-T. Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <iosfwd>
#include <string>
#include <vector>

namespace ipc::cli {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

/// `args` excludes the program name. Machine-readable output goes to `out`,
/// progress logs and diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace ipc::cli
