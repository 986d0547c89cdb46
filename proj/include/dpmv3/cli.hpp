#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dpmv3 {

/// Entry point of the dpmv3 command line tool. Exit codes: 0 success,
/// 1 runtime error, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace dpmv3
