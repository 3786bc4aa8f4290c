#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tdgeo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Stands in for a coefficient that is infinite by construction (reversible
/// environments, rank-deficient kernels). Always IEEE +inf, never a large float.
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class ErrorCode {
  NotStochastic,
  Reducible,
  Periodic,
  SingularSolve,
  ShapeMismatch,
  PositivityViolation,
  InvalidProbability,
  SolveFailure,
  RankDeficient,
  NoComplexEigenvalue,
  DivergedBeyondRange,
  StepFailure,
  NonFiniteState,
  TooFewSamples,
  NotHomogeneous,
  ConstantEstimationFailed,
  ParseError,
  InvalidArgument,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotStochastic: return "NotStochastic";
    case ErrorCode::Reducible: return "Reducible";
    case ErrorCode::Periodic: return "Periodic";
    case ErrorCode::SingularSolve: return "SingularSolve";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::PositivityViolation: return "PositivityViolation";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::SolveFailure: return "SolveFailure";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NoComplexEigenvalue: return "NoComplexEigenvalue";
    case ErrorCode::DivergedBeyondRange: return "DivergedBeyondRange";
    case ErrorCode::StepFailure: return "StepFailure";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NotHomogeneous: return "NotHomogeneous";
    case ErrorCode::ConstantEstimationFailed: return "ConstantEstimationFailed";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace tdgeo
