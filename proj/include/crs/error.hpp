#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crs {

/// Machine-readable failure categories. Every thrown `crs::Error` carries one,
/// and the CLI and HTTP layers report it verbatim.
enum class ErrorCode {
  UnknownLabel,
  MissingFollowUp,
  SchemaMismatch,
  DuplicateId,
  DegenerateClass,
  LengthMismatch,
  DimensionMismatch,
  NonFinite,
  NoConvergence,
  WeightMismatch,
  DegenerateFold,
  UnknownFeature,
  BudgetTooSmall,
  DegenerateData,
  TooFewCases,
  IncompleteCoverage,
  UnknownCase,
  UnknownRater,
  MalformedConfidence,
  ParseError,
  IoError,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace crs
