#pragma once

#include <string>
#include <vector>

namespace actlearn::cli {

// Runs the command line given the arguments after the program name.
// Returns the process exit status: 0 success, 1 validation/run failure,
// 2 usage or configuration error.
int run(const std::vector<std::string>& args);

} // namespace actlearn::cli
