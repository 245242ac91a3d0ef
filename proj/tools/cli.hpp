#pragma once

#include <string>
#include <vector>

namespace xcap {

// Entry point behind the `xcap` binary. Returns 0 on success, 2 on usage
// errors, 1 on runtime failures.
int run_cli(const std::vector<std::string>& args);

}  // namespace xcap
