#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace kc {

// Runs one subcommand. `args` excludes the program name. Returns 0 on
// success, 1 on pipeline errors and 2 on usage or configuration errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kc
