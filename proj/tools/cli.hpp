#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace coach::cli {

enum ExitCode { kOk = 0, kInputError = 1, kRuntimeError = 2 };

// Entry point shared by the executable and the tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace coach::cli
