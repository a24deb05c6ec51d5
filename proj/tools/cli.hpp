#pragma once

#include <iosfwd>

namespace fol::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalError = 3, kAssertFailed = 4 };

/// Entry point of the `fol` tool, callable from tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fol::cli
