#pragma once

#include <string>
#include <vector>

namespace mvherit {

// Parses and runs one subcommand. args excludes the program name. Returns
// the process exit code: 0 success, 1 usage or validation failure,
// 2 numerical failure.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, char** argv);

}  // namespace mvherit
