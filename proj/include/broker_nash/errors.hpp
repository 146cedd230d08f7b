#pragma once

#include <stdexcept>
#include <string>

namespace broker_nash {

/// Failure modes of the numerical pipeline. Each carries enough context
/// (time, gap, path) to be reported by the CLI without re-deriving it.
enum class ErrorKind {
  BlowUp,         // Riccati entries exceeded the cap (finite-time escape)
  SingularR,      // linearization matrix R lost invertibility
  GridMismatch,   // two gridded objects live on different grids
  NotOnGrid,      // evaluation time is not a grid node
  NoConvergence,  // Picard iteration did not reach tolerance
  NonFinite,      // a simulated path produced NaN/Inf
  InvalidInput,   // non-finite or out-of-domain arguments
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BlowUp: return "BlowUp";
    case ErrorKind::SingularR: return "SingularR";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::NotOnGrid: return "NotOnGrid";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::InvalidInput: return "InvalidInput";
  }
  return "Unknown";
}

class SolverError : public std::runtime_error {
 public:
  SolverError(ErrorKind kind, const std::string& what, double where = 0.0)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind),
        where_(where) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Time (BlowUp, SingularR, NonFinite) or final gap (NoConvergence).
  double where() const noexcept { return where_; }

 private:
  ErrorKind kind_;
  double where_;
};

}  // namespace broker_nash
