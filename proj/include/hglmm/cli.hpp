#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hglmm {

/// Exit codes: 0 success, 1 usage, 2 format/validation, 3 shape, 4 numerical.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitFormat = 2, kExitShape = 3, kExitNumerical = 4 };

/// Entry point of the `hglmm` tool. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hglmm
