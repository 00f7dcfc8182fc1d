#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace synthctl {

enum class ErrorCode {
  // input and configuration
  EmptyFile,
  MalformedCsv,
  DuplicateCell,
  UnparseableDate,
  InvalidArgument,
  UnknownUnit,
  UnknownClusterLabel,
  UnlabeledUnit,
  UnknownState,
  EmptyIntersection,
  EmptyBlock,
  InvalidSplit,
  DimensionMismatch,
  Io,
  // computation
  AllMissing,
  MissingData,
  NonPositivePopulation,
  NegativeDerivedCount,
  NonConvergence,
  EmptyWindow,
  ZeroVariancePredictor,
  ZeroPreRmse,
  DegenerateSeries,
  ZeroVariance,
  TooFewUnits,
};

std::string_view to_string(ErrorCode code);

// True for errors caused by bad inputs or options rather than by the numerics.
bool is_configuration_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace synthctl
