#include "logonet/error.hpp"

namespace logonet {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kParameter: return "parameter error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kLayout: return "layout error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kLookup: return "lookup error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kBuild: return "build error";
    case ErrorKind::kTraining: return "training error";
    case ErrorKind::kDegenerateRegion: return "degenerate region error";
    case ErrorKind::kIo: return "io error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message),
      kind_(kind) {}

}  // namespace logonet
