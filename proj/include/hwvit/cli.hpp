#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace hwvit::cli {

/// Runs one command line (arguments after the program name) and returns the
/// process exit status: 0 on success, 1 when a verification fails, 2 on
/// usage or runtime errors.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

}  // namespace hwvit::cli
