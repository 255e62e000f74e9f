#include "crs/error.hpp"

namespace crs {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::MissingFollowUp: return "MissingFollowUp";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::DegenerateClass: return "DegenerateClass";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::WeightMismatch: return "WeightMismatch";
    case ErrorCode::DegenerateFold: return "DegenerateFold";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::TooFewCases: return "TooFewCases";
    case ErrorCode::IncompleteCoverage: return "IncompleteCoverage";
    case ErrorCode::UnknownCase: return "UnknownCase";
    case ErrorCode::UnknownRater: return "UnknownRater";
    case ErrorCode::MalformedConfidence: return "MalformedConfidence";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace crs
