#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mtec::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kTrainingError = 3, kDownstreamError = 4 };

// Parses `args` (without the program name) and runs one subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mtec::cli
