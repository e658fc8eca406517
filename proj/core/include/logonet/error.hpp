#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace logonet {

enum class ErrorKind {
  kDimension,
  kParameter,
  kData,
  kFormat,
  kLayout,
  kNumeric,
  kLookup,
  kConfig,
  kBuild,
  kTraining,
  kDegenerateRegion,
  kIo,
};

std::string_view to_string(ErrorKind kind);

// Every module error carries a kind so callers (and the CLI) can react
// without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define LOGONET_DEFINE_ERROR(Name, Kind)                      \
  class Name : public Error {                                 \
   public:                                                    \
    explicit Name(const std::string& message)                 \
        : Error(ErrorKind::Kind, message) {}                  \
  };

LOGONET_DEFINE_ERROR(DimensionError, kDimension)
LOGONET_DEFINE_ERROR(ParameterError, kParameter)
LOGONET_DEFINE_ERROR(DataError, kData)
LOGONET_DEFINE_ERROR(FormatError, kFormat)
LOGONET_DEFINE_ERROR(LayoutError, kLayout)
LOGONET_DEFINE_ERROR(NumericError, kNumeric)
LOGONET_DEFINE_ERROR(LookupError, kLookup)
LOGONET_DEFINE_ERROR(ConfigError, kConfig)
LOGONET_DEFINE_ERROR(BuildError, kBuild)
LOGONET_DEFINE_ERROR(TrainingError, kTraining)
LOGONET_DEFINE_ERROR(DegenerateRegionError, kDegenerateRegion)
LOGONET_DEFINE_ERROR(IoError, kIo)

#undef LOGONET_DEFINE_ERROR

}  // namespace logonet
