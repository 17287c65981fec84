#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mtlens {

enum class ErrorCode {
  MalformedTaskName,
  MissingDataset,
  AlignmentError,
  EncodingError,
  EmptyInput,
  IdMismatch,
  SchemaError,
  DuplicateMetric,
  PluginCrash,
  PluginTimeout,
  SpanOutOfRange,
  MissingScores,
  WordTooShort,
  PositionOutOfRange,
  MissingHypotheses,
  MissingVariant,
  DegenerateInput,
  MetricMissing,
  ValidationError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above so
/// callers (CLI, HTTP layer) can map it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mtlens
