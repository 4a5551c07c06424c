#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gmc::cli {

// Runs one gmcimpute invocation; args excludes the program name.
// Returns 0 on success, 1 usage/config error, 2 data error, 3 numeric failure.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gmc::cli
