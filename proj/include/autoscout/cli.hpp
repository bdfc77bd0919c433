#pragma once

#include <iosfwd>

namespace autoscout {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitInvalidInput = 2,
  kExitProtocol = 3,
  kExitNoEvaluations = 4,
};

/// `autoscout optimize ...` / `autoscout benchmark ...`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace autoscout
