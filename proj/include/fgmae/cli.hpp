#pragma once

#include <string>
#include <vector>

namespace fgmae {

// Entry point of the `fgmae` command line tool. Returns 0 on success, 1 when
// a command fails and 2 on usage errors. args[0] is the program name.
int run_command(const std::vector<std::string>& args);

}  // namespace fgmae
