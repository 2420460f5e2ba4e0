#pragma once

namespace x0t {

// Entry point of the x0t command line: subcommands transfer, invert,
// match-debug, evaluate, cache. Returns the process exit code:
// 0 success, 1 staged/runtime failure, 2 configuration error.
int run_cli(int argc, const char* const* argv);

}  // namespace x0t
