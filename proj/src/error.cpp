#include "mia/error.hpp"

namespace mia {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kPrecondition: return "precondition";
    case ErrorCode::kTrainingFailure: return "training-failure";
    case ErrorCode::kQueryFailure: return "query-failure";
    case ErrorCode::kInvalidBracket: return "invalid-bracket";
    case ErrorCode::kInitFailure: return "init-failure";
    case ErrorCode::kInvalidInit: return "invalid-init";
    case ErrorCode::kInsufficientAux: return "insufficient-aux";
    case ErrorCode::kInsufficientCorrect: return "insufficient-correct";
    case ErrorCode::kUndefinedCorrelation: return "undefined-correlation";
    case ErrorCode::kConfigError: return "config-error";
    case ErrorCode::kIoError: return "io-error";
  }
  return "unknown";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError: return 2;
    case ErrorCode::kQueryFailure: return 3;
    case ErrorCode::kTrainingFailure: return 4;
    case ErrorCode::kInsufficientAux:
    case ErrorCode::kInsufficientCorrect: return 5;
    default: return 1;
  }
}

}  // namespace mia
