#pragma once

#include <stdexcept>
#include <string>

namespace fisher {

/// Base class for solver failures.
class SolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No feasible point exists (phase-1 certificate above tolerance).
class InfeasibleError : public SolveError {
 public:
  using SolveError::SolveError;
};

/// Objective increases without bound along a feasible ray.
class UnboundedError : public SolveError {
 public:
  using SolveError::SolveError;
};

/// Iteration budget exhausted before reaching the requested tolerance.
class MaxIterError : public SolveError {
 public:
  using SolveError::SolveError;
};

}  // namespace fisher
