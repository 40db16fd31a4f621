#include "elfslam/errors.hpp"

namespace elfslam {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Length: return "length";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Geometry: return "geometry";
    case ErrorKind::Sequence: return "sequence";
    case ErrorKind::Sampling: return "sampling";
    case ErrorKind::Argument: return "argument";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Training: return "training";
    case ErrorKind::Solver: return "solver";
    case ErrorKind::Data: return "data";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace elfslam
