#pragma once

#include <string>
#include <vector>

namespace effdim::cli {

/// Runs one subcommand. Returns 0 on success, 1 on a numerical or I/O
/// failure and 2 on a usage or configuration error.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace effdim::cli
