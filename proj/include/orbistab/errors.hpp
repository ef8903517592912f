#pragma once

#include <stdexcept>
#include <string>

namespace orbistab {

/// Failure categories shared across the library. The CLI maps these onto exit codes.
enum class ErrorKind {
  SingularDynamics,
  NotApplicable,
  InfeasibleOrbit,
  InconsistentParameterization,
  OutsideNeighborhood,
  ImplicitFunctionViolation,
  NoCertificate,
  InfeasiblePsd,
  VerificationFailed,
  DecreaseViolated,
  EscapedTube,
  NumericBlowup,
  Numeric,
  Config,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SingularDynamics: return "singular-dynamics";
    case ErrorKind::NotApplicable: return "not-applicable";
    case ErrorKind::InfeasibleOrbit: return "infeasible-orbit";
    case ErrorKind::InconsistentParameterization: return "inconsistent-parameterization";
    case ErrorKind::OutsideNeighborhood: return "outside-neighborhood";
    case ErrorKind::ImplicitFunctionViolation: return "implicit-function-violation";
    case ErrorKind::NoCertificate: return "no-certificate";
    case ErrorKind::InfeasiblePsd: return "infeasible-psd";
    case ErrorKind::VerificationFailed: return "verification-failed";
    case ErrorKind::DecreaseViolated: return "decrease-violated";
    case ErrorKind::EscapedTube: return "escaped-tube";
    case ErrorKind::NumericBlowup: return "numeric-blowup";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Thrown when an iterative solve stops short; carries the best value reached.
class ConvergenceError : public Error {
 public:
  ConvergenceError(ErrorKind kind, const std::string& what, double best_residual)
      : Error(kind, what), best_residual_(best_residual) {}

  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

}  // namespace orbistab
