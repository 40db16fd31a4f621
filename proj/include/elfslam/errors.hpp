#pragma once

#include <stdexcept>
#include <string>

namespace elfslam {

// Error taxonomy. Each category maps onto one CLI exit code (see tools/cli.hpp).
enum class ErrorKind {
  Config,     // invalid configuration values or unknown keys
  Length,     // sequence or buffer too short / too long
  Shape,      // tensor or matrix shape mismatch
  Geometry,   // point outside a room, degenerate polygon
  Sequence,   // non-consecutive indices
  Sampling,   // no eligible training pairs
  Argument,   // empty inputs and other contract violations
  Numeric,    // non-finite values
  Training,   // divergence during optimization of the extractor
  Solver,     // pose-graph normal equations could not be solved
  Data,       // malformed files on disk
  Io,         // file system failures
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace elfslam
