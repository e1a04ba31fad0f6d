#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ccrecall {

// Exit codes: 0 success, 2 invalid input or configuration, 3 estimation failure.
inline constexpr int kExitValidation = 2;
inline constexpr int kExitEstimation = 3;

// Runs the command line; results go to `out` (or --out), messages to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ccrecall
