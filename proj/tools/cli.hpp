#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stef::cli {

/// Runs one command line (without the program name). Exit codes: 0 success,
/// 1 usage error, 2 data or numerical error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stef::cli
