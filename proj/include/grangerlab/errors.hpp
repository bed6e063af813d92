#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>

namespace grangerlab {

/// Coarse failure category. The CLI maps Validation to exit code 2 and
/// Numerical to exit code 3.
enum class ErrorKind { Validation, Numerical };

enum class ErrorCode {
  // core-data
  NonFiniteValue,
  RaggedTrials,
  EmptyInput,
  SegmentTooShort,
  // var-estimation
  SingularDesign,
  InsufficientSamples,
  MaxLagTooSmall,
  // gc-time
  SingularCovarianceBlock,
  ChannelOverlap,
  // gc-spectral
  SingularTheta,
  CorrelatedInnovations,
  ZeroRow,
  ZeroColumn,
  // transfer-entropy
  BandwidthNonPositive,
  // tv-var
  WindowTooShort,
  CovarianceBlowup,
  VariantTrialMismatch,
  Divergence,
  LikelihoodDecrease,
  SingularExpandedDesign,
  MissingStateCov,
  // resampling-inference
  TooFewTrialsForShuffle,
  SchemeInfeasible,
  OutOfRangeP,
  // simulation
  UnstableSpec,
  // cli-io
  BadConfig,
  IoFailure,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::RaggedTrials: return "RaggedTrials";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::SegmentTooShort: return "SegmentTooShort";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::MaxLagTooSmall: return "MaxLagTooSmall";
    case ErrorCode::SingularCovarianceBlock: return "SingularCovarianceBlock";
    case ErrorCode::ChannelOverlap: return "ChannelOverlap";
    case ErrorCode::SingularTheta: return "SingularTheta";
    case ErrorCode::CorrelatedInnovations: return "CorrelatedInnovations";
    case ErrorCode::ZeroRow: return "ZeroRow";
    case ErrorCode::ZeroColumn: return "ZeroColumn";
    case ErrorCode::BandwidthNonPositive: return "BandwidthNonPositive";
    case ErrorCode::WindowTooShort: return "WindowTooShort";
    case ErrorCode::CovarianceBlowup: return "CovarianceBlowup";
    case ErrorCode::VariantTrialMismatch: return "VariantTrialMismatch";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::LikelihoodDecrease: return "LikelihoodDecrease";
    case ErrorCode::SingularExpandedDesign: return "SingularExpandedDesign";
    case ErrorCode::MissingStateCov: return "MissingStateCov";
    case ErrorCode::TooFewTrialsForShuffle: return "TooFewTrialsForShuffle";
    case ErrorCode::SchemeInfeasible: return "SchemeInfeasible";
    case ErrorCode::OutOfRangeP: return "OutOfRangeP";
    case ErrorCode::UnstableSpec: return "UnstableSpec";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

inline ErrorKind error_kind(ErrorCode c) {
  switch (c) {
    case ErrorCode::SingularDesign:
    case ErrorCode::SingularCovarianceBlock:
    case ErrorCode::SingularTheta:
    case ErrorCode::CorrelatedInnovations:
    case ErrorCode::ZeroRow:
    case ErrorCode::ZeroColumn:
    case ErrorCode::CovarianceBlowup:
    case ErrorCode::Divergence:
    case ErrorCode::LikelihoodDecrease:
    case ErrorCode::SingularExpandedDesign:
      return ErrorKind::Numerical;
    default:
      return ErrorKind::Validation;
  }
}

/// Library-wide exception. `detail` carries machine-readable context
/// (e.g. the offending frequency for SingularTheta).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message,
        std::map<std::string, double> detail = {})
      : std::runtime_error(std::move(message)),
        code_(code),
        detail_(std::move(detail)) {}

  ErrorCode code() const { return code_; }
  ErrorKind kind() const { return error_kind(code_); }
  const std::map<std::string, double>& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::map<std::string, double> detail_;
};

}  // namespace grangerlab
