#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sphcalib {

enum class ErrorCode {
  kDegenerateProjection,
  kInvalidFov,
  kOutOfModelRange,
  kHorizonAtInfinity,
  kNoValidPitch,
  kEmptyHorizon,
  kNoIntersection,
  kInvalidArgument,
  kSamplingExhausted,
  kBadPanoramaAspect,
  kInvalidTarget,
  kNoData,
  kMissingSurface,
  kEmptyIndex,
  kSchema,
  kIo,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDegenerateProjection: return "DegenerateProjection";
    case ErrorCode::kInvalidFov: return "InvalidFov";
    case ErrorCode::kOutOfModelRange: return "OutOfModelRange";
    case ErrorCode::kHorizonAtInfinity: return "HorizonAtInfinity";
    case ErrorCode::kNoValidPitch: return "NoValidPitch";
    case ErrorCode::kEmptyHorizon: return "EmptyHorizon";
    case ErrorCode::kNoIntersection: return "NoIntersection";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kSamplingExhausted: return "SamplingExhausted";
    case ErrorCode::kBadPanoramaAspect: return "BadPanoramaAspect";
    case ErrorCode::kInvalidTarget: return "InvalidTarget";
    case ErrorCode::kNoData: return "NoData";
    case ErrorCode::kMissingSurface: return "MissingSurface";
    case ErrorCode::kEmptyIndex: return "EmptyIndex";
    case ErrorCode::kSchema: return "SchemaError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sphcalib
