#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cryoctl {

enum class ErrorKind {
  // protocol
  kUnknownOpcode,
  kUnknownAddress,
  kValueOutOfRange,
  kMalformedStream,
  // fsm
  kIllegalTransition,
  kClockDisabled,
  kNotInPlayback,
  // analog
  kAlreadyUnlocked,
  kLockClosed,
  kInvalidParameter,
  // device
  kUnknownGate,
  kSampleRateTooLow,
  kAxisMismatch,
  // thermal
  kNotConfigured,
  kInvalidCalibration,
  // engine / config
  kInvalidScenario,
  kUnknownAxis,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library. `kind()` identifies the failure
/// class so callers (and the CLI exit-code mapping) never parse messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& message() const noexcept { return message_; }

  /// Same error with `context` prepended to the message.
  Error with_context(const std::string& context) const { return Error(kind_, context + ": " + message_); }

  /// True for errors caused by bad input files or configuration rather than
  /// by simulation-time conditions.
  bool is_validation() const noexcept;

 private:
  ErrorKind kind_;
  std::string message_;
};

}  // namespace cryoctl
