#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace bgate {

/// Runs the command line tool on `args` (without the program name). Returns
/// 0 on success, 2 on invalid input or configuration, 3 when estimation fails.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bgate
