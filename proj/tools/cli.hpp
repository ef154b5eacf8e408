#pragma once

#include <ostream>

namespace drscore::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kInputError = 2,
  kNumericalError = 3,
  kUnbounded = 4,
};

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace drscore::cli
