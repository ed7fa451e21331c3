#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace kgcrf::cli {

// Runs one command. `args` excludes the program name. Success prints the run
// manifest as JSON on `out`; diagnostics go to `err`. Returns the process exit
// code: 0 success, 2 usage or validation error, 3 IO error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kgcrf::cli
