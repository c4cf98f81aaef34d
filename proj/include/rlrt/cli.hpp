#pragma once

#include <string>
#include <vector>

namespace rlrt {

// Exit codes: 0 success, 1 configuration/usage error, 2 I/O or shape error,
// 3 numerical failure. Diagnostics go to stderr.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace rlrt
