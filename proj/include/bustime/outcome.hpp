#pragma once

#include <string_view>
#include <variant>

namespace bustime {

/// Why a fragment or trip was discarded by the pipeline. Rejections are
/// expected data outcomes, not errors, so they travel as values.
enum class RejectReason {
  kTooShort,
  kAmbiguousDirection,
  kEndpointTooFar,
  kTooShortInTimeOrDistance,
  kDegenerateAlignment,
  kInsufficientCoverage,
};

constexpr std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kTooShort: return "TooShort";
    case RejectReason::kAmbiguousDirection: return "AmbiguousDirection";
    case RejectReason::kEndpointTooFar: return "EndpointTooFar";
    case RejectReason::kTooShortInTimeOrDistance: return "TooShortInTimeOrDistance";
    case RejectReason::kDegenerateAlignment: return "DegenerateAlignment";
    case RejectReason::kInsufficientCoverage: return "InsufficientCoverage";
  }
  return "Unknown";
}

template <class T>
using Outcome = std::variant<T, RejectReason>;

template <class T>
bool accepted(const Outcome<T>& o) {
  return std::holds_alternative<T>(o);
}

template <class T>
RejectReason reason(const Outcome<T>& o) {
  return std::get<RejectReason>(o);
}

}  // namespace bustime
