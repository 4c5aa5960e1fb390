#pragma once

#include <iosfwd>

namespace ibowimg::cli {

// Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime error.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

// Entry point of the ibowimg command; results go to `out`, diagnostics and
// the resolved configuration to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ibowimg::cli
