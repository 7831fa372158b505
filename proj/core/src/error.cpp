#include "gradlens/error.hpp"

namespace gradlens {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kInvalidShape: return "InvalidShape";
    case ErrorCode::kInvalidAngle: return "InvalidAngle";
    case ErrorCode::kInvalidParams: return "InvalidParams";
    case ErrorCode::kParamMissing: return "ParamMissing";
    case ErrorCode::kInvalidBatch: return "InvalidBatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kUnsupportedKind: return "UnsupportedKind";
    case ErrorCode::kInfeasibleGeometry: return "InfeasibleGeometry";
    case ErrorCode::kNoSolution: return "NoSolution";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kDivergenceDetected: return "DivergenceDetected";
    case ErrorCode::kMissingVariant: return "MissingVariant";
  }
  return "Unknown";
}

}  // namespace gradlens
