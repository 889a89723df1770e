// Command-line front end. Exit codes: 0 success, 1 I/O or other failure,
// 2 usage error, 3 parse error, 4 fit, range, numeric or conditioning error.
#pragma once

#include <iosfwd>

namespace resocal::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kParse = 3, kFit = 4 };

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace resocal::cli
