#include "spanrule/error.hpp"

namespace spanrule {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kCorruptLog: return "corrupt_log";
    case ErrorCode::kUnavailable: return "unavailable";
    case ErrorCode::kEvaluation: return "evaluation_error";
    case ErrorCode::kInternal: return "internal";
  }
  return "internal";
}

}  // namespace spanrule
