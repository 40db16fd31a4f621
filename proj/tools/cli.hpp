#pragma once

#include <iosfwd>

#include "elfslam/errors.hpp"

namespace elfslam::cli {

// 0 ok, 2 configuration or usage, 3 data or I/O, 4 numeric or training.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

int exit_code(ErrorKind kind);

/// Runs one CLI invocation. Failures are reported as a single line
/// `elfslam: error kind=<kind> exit=<code>: <message>` on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace elfslam::cli
