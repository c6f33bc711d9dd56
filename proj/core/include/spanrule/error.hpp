#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spanrule {

enum class ErrorCode {
  kInvalidArgument,  // malformed input, broken invariant
  kNotFound,         // unknown id, concept, document
  kConflict,         // overlap, duplicate, stale suggestion token
  kParse,            // corpus/log/regex syntax
  kCorruptLog,       // revision gap or reordering in an event log
  kUnavailable,      // statistic undefined (e.g. empty dev split)
  kEvaluation,       // rule references something that no longer exists
  kInternal,
};

std::string_view to_string(ErrorCode code);

/// Exception carried across module boundaries. The code maps 1:1 to the
/// `code` field of the HTTP error body.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace spanrule
