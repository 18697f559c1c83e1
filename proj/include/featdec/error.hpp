#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace featdec {

enum class ErrorCode {
  DimensionMismatch,
  NotPositiveDefinite,
  ConvergenceFailure,
  EigenFailure,
  FormatError,
  LabelOutOfRange,
  IoError,
  BadSplit,
  SingularCovariance,
  EmptyClass,
  LengthMismatch,
  VariantMismatch,
  NoConvergence,
  Divergence,
  EmptyInput,
  OrientationMismatch,
  ZeroVariance,
  TooFewSamples,
  ZeroDistance,
  InvalidArgument,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::EigenFailure: return "EigenFailure";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BadSplit: return "BadSplit";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::VariantMismatch: return "VariantMismatch";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::OrientationMismatch: return "OrientationMismatch";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::ZeroDistance: return "ZeroDistance";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the categories above so
/// that the CLI can report it on a single machine-parsable line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace featdec
