#include "fastpose/errors.hpp"

namespace fastpose {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::kEmptyModel: return "EmptyModel";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kInvalidRotation: return "InvalidRotation";
    case ErrorCode::kInvalidCamera: return "InvalidCamera";
    case ErrorCode::kInvalidModel: return "InvalidModel";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kMissingDiameter: return "MissingDiameter";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kTooAggressive: return "TooAggressive";
    case ErrorCode::kInconsistentPlan: return "InconsistentPlan";
    case ErrorCode::kInvalidTemperature: return "InvalidTemperature";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kMalformedHeader: return "MalformedHeader";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code), message_(message) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace fastpose
