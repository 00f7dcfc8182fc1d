#include "synthctl/error.hpp"

#include <string>

namespace synthctl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::MalformedCsv: return "MalformedCsv";
    case ErrorCode::DuplicateCell: return "DuplicateCell";
    case ErrorCode::UnparseableDate: return "UnparseableDate";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownUnit: return "UnknownUnit";
    case ErrorCode::UnknownClusterLabel: return "UnknownClusterLabel";
    case ErrorCode::UnlabeledUnit: return "UnlabeledUnit";
    case ErrorCode::UnknownState: return "UnknownState";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::EmptyBlock: return "EmptyBlock";
    case ErrorCode::InvalidSplit: return "InvalidSplit";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::Io: return "Io";
    case ErrorCode::AllMissing: return "AllMissing";
    case ErrorCode::MissingData: return "MissingData";
    case ErrorCode::NonPositivePopulation: return "NonPositivePopulation";
    case ErrorCode::NegativeDerivedCount: return "NegativeDerivedCount";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::ZeroVariancePredictor: return "ZeroVariancePredictor";
    case ErrorCode::ZeroPreRmse: return "ZeroPreRmse";
    case ErrorCode::DegenerateSeries: return "DegenerateSeries";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::TooFewUnits: return "TooFewUnits";
  }
  return "Unknown";
}

bool is_configuration_error(ErrorCode code) {
  return code <= ErrorCode::Io;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace synthctl
