#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fastpose {

enum class ErrorCode {
  kNonPositiveDepth,
  kEmptyModel,
  kDegenerateInput,
  kInvalidRotation,
  kInvalidCamera,
  kInvalidModel,
  kEmptyInput,
  kMissingDiameter,
  kShapeMismatch,
  kInvalidConfig,
  kTooAggressive,
  kInconsistentPlan,
  kInvalidTemperature,
  kLengthMismatch,
  kMalformedLine,
  kUnsupportedFormat,
  kMalformedHeader,
  kIndexOutOfRange,
  kSchemaViolation,
  kIoError,
};

std::string_view error_code_name(ErrorCode code);

// All data errors raised by the library. `what()` carries the code name, the
// locator (line number or JSON path) when one exists, and the reason.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  // The reason without the code-name prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace fastpose
