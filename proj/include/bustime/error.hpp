#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bustime {

enum class ErrorCode {
  kMissingFile,
  kUnreadableFile,
  kUnwritableDirectory,
  kMalformedRow,
  kRouteWithoutStops,
  kOutOfProjectionRange,
  kEmptyInput,
  kEmptyRecords,
  kKTooLarge,
  kSingularFit,
  kNonFiniteLoss,
  kInvalidConfig,
  kInvalidArgument,
  kBadModelFile,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kUnreadableFile: return "UnreadableFile";
    case ErrorCode::kUnwritableDirectory: return "UnwritableDirectory";
    case ErrorCode::kMalformedRow: return "MalformedRow";
    case ErrorCode::kRouteWithoutStops: return "RouteWithoutStops";
    case ErrorCode::kOutOfProjectionRange: return "OutOfProjectionRange";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kEmptyRecords: return "EmptyRecords";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kSingularFit: return "SingularFit";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kBadModelFile: return "BadModelFile";
  }
  return "Unknown";
}

/// Every failure raised by the library. The message names the offending
/// file, row, trip or parameter; `code()` is stable for programmatic checks.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bustime
