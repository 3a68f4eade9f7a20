#include "cryoctl/error.hpp"

namespace cryoctl {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUnknownOpcode: return "UnknownOpcode";
    case ErrorKind::kUnknownAddress: return "UnknownAddress";
    case ErrorKind::kValueOutOfRange: return "ValueOutOfRange";
    case ErrorKind::kMalformedStream: return "MalformedStream";
    case ErrorKind::kIllegalTransition: return "IllegalTransition";
    case ErrorKind::kClockDisabled: return "ClockDisabled";
    case ErrorKind::kNotInPlayback: return "NotInPlayback";
    case ErrorKind::kAlreadyUnlocked: return "AlreadyUnlocked";
    case ErrorKind::kLockClosed: return "LockClosed";
    case ErrorKind::kInvalidParameter: return "InvalidParameter";
    case ErrorKind::kUnknownGate: return "UnknownGate";
    case ErrorKind::kSampleRateTooLow: return "SampleRateTooLow";
    case ErrorKind::kAxisMismatch: return "AxisMismatch";
    case ErrorKind::kNotConfigured: return "NotConfigured";
    case ErrorKind::kInvalidCalibration: return "InvalidCalibration";
    case ErrorKind::kInvalidScenario: return "InvalidScenario";
    case ErrorKind::kUnknownAxis: return "UnknownAxis";
  }
  return "Unknown";
}

bool Error::is_validation() const noexcept {
  switch (kind_) {
    case ErrorKind::kUnknownOpcode:
    case ErrorKind::kUnknownAddress:
    case ErrorKind::kValueOutOfRange:
    case ErrorKind::kMalformedStream:
    case ErrorKind::kInvalidParameter:
    case ErrorKind::kInvalidCalibration:
    case ErrorKind::kInvalidScenario:
    case ErrorKind::kUnknownAxis:
    case ErrorKind::kUnknownGate:
      return true;
    default:
      return false;
  }
}

}  // namespace cryoctl
