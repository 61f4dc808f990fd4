#pragma once

#include <stdexcept>
#include <string>

namespace mcu {

enum class ErrorCode {
  InvalidArgument,
  NonFiniteInput,
  ZeroVarianceColumn,
  AllZeroVariance,
  DimensionMismatch,
  ShapeMismatch,
  KTooLarge,
  EigenFailure,
  NotConverged,
  InfeasibleStart,
  AllZero,
  SingularSystem,
  ZeroReference,
  BadBaseImage,
  BadBaseCloud,
  MissingBundle,
  ConfigError,
  IoError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::ZeroVarianceColumn: return "ZeroVarianceColumn";
    case ErrorCode::AllZeroVariance: return "AllZeroVariance";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::EigenFailure: return "EigenFailure";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::InfeasibleStart: return "InfeasibleStart";
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::ZeroReference: return "ZeroReference";
    case ErrorCode::BadBaseImage: return "BadBaseImage";
    case ErrorCode::BadBaseCloud: return "BadBaseCloud";
    case ErrorCode::MissingBundle: return "MissingBundle";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable code. The CLI maps codes onto
/// process exit statuses with exit_code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// 1 = configuration, 2 = IO, 3 = numeric/convergence.
inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
      return 1;
    case ErrorCode::IoError:
    case ErrorCode::MissingBundle:
    case ErrorCode::BadBaseImage:
    case ErrorCode::BadBaseCloud:
      return 2;
    default:
      return 3;
  }
}

}  // namespace mcu
