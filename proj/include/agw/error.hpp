#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agw {

enum class ErrorCode {
  // grid-store
  BadMagic,
  TruncatedPayload,
  InvalidHeader,
  IoFailure,
  InvalidConfig,
  OutOfDomain,
  IndexOutOfRange,
  DateOutOfRange,
  // geo-extract
  EmptyEA,
  UnknownHousehold,
  MissingContext,
  EmptyZone,
  // weather-metrics
  RangeUnavailable,
  ContainsMissing,
  EmptySeason,
  EmptySeries,
  TooFewSeasons,
  // survey-model
  SchemaMismatch,
  DuplicateKey,
  NegativeOutcome,
  MissingMetric,
  AmbiguousJoin,
  // econometrics
  MissingColumn,
  AllMissingMetric,
  NoVariation,
  RankDeficient,
  TooFewClusters,
  DegenerateDof,
  // battery
  EmptyDimension,
  EmptyGroup,
  MissingReference,
  ProviderUnavailable,
  NoData,
};

constexpr std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::InvalidHeader: return "InvalidHeader";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::DateOutOfRange: return "DateOutOfRange";
    case ErrorCode::EmptyEA: return "EmptyEA";
    case ErrorCode::UnknownHousehold: return "UnknownHousehold";
    case ErrorCode::MissingContext: return "MissingContext";
    case ErrorCode::EmptyZone: return "EmptyZone";
    case ErrorCode::RangeUnavailable: return "RangeUnavailable";
    case ErrorCode::ContainsMissing: return "ContainsMissing";
    case ErrorCode::EmptySeason: return "EmptySeason";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::TooFewSeasons: return "TooFewSeasons";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::NegativeOutcome: return "NegativeOutcome";
    case ErrorCode::MissingMetric: return "MissingMetric";
    case ErrorCode::AmbiguousJoin: return "AmbiguousJoin";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::AllMissingMetric: return "AllMissingMetric";
    case ErrorCode::NoVariation: return "NoVariation";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::TooFewClusters: return "TooFewClusters";
    case ErrorCode::DegenerateDof: return "DegenerateDof";
    case ErrorCode::EmptyDimension: return "EmptyDimension";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::MissingReference: return "MissingReference";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::NoData: return "NoData";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code; the
/// battery stores the code name in the status column of results.csv.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace agw
