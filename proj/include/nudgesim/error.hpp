#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nudgesim {

enum class Errc {
  DimensionMismatch,
  InvalidArgument,
  SingularMatrix,
  NoConvergence,
  UnstableMatrix,
  NotConvex,
  ZeroRow,
  AssumptionOneViolated,
  NegativeControl,
  SolverFailure,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::SingularMatrix: return "SingularMatrix";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::UnstableMatrix: return "UnstableMatrix";
    case Errc::NotConvex: return "NotConvex";
    case Errc::ZeroRow: return "ZeroRow";
    case Errc::AssumptionOneViolated: return "AssumptionOneViolated";
    case Errc::NegativeControl: return "NegativeControl";
    case Errc::SolverFailure: return "SolverFailure";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable error code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Raised when some agents cannot reach a partially stubborn agent
/// (lambda < 1) along directed influence edges.
class AssumptionOneError : public Error {
 public:
  explicit AssumptionOneError(std::vector<int> unreachable)
      : Error(Errc::AssumptionOneViolated, describe(unreachable)),
        unreachable_(std::move(unreachable)) {}

  const std::vector<int>& unreachable() const noexcept { return unreachable_; }

 private:
  static std::string describe(const std::vector<int>& nodes) {
    std::string s = "Assumption 1 violated: no path to an agent with lambda < 1 from nodes [";
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(nodes[i]);
    }
    return s + "]";
  }

  std::vector<int> unreachable_;
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::DimensionMismatch, what);
}

}  // namespace nudgesim
