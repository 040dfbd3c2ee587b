#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lotcrs::cli {

// Entry point shared by the binary and the tests. Returns the process exit
// code: 0 success, 1 validation/runtime failure, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out);

}  // namespace lotcrs::cli
