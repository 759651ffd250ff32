#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace oscar {

enum ExitCode : int {
  kExitOk = 0,
  kExitInputError = 1,
  kExitFormatError = 2,
  kExitVerificationFailure = 3,
};

// Entry point for the `oscar` tool. args excludes the program name. Data
// goes to out, diagnostics to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace oscar
