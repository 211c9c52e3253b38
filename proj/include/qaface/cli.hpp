#pragma once

#include <string>
#include <vector>

namespace qaface {

// Full command dispatcher behind the qaface binary; args exclude the program
// name. Returns the process exit status: 0 success, 2 configuration errors,
// 1 runtime errors.
int run_command(std::vector<std::string> args);

}  // namespace qaface
