#pragma once

#include <string>
#include <vector>

namespace vicm {

// Batch entry point. Returns the process exit code:
//   0 success, 1 usage error, 2 data error, 3 numeric failure.
int run_command(const std::vector<std::string>& args);

}  // namespace vicm
