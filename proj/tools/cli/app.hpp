#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gaitlab::cli {

/// The gaitlab command line. Returns the process exit status: 0 success,
/// 1 runtime failure, 2 usage or configuration error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace gaitlab::cli
