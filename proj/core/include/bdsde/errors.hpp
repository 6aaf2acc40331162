#pragma once

#include <stdexcept>
#include <string>

namespace bdsde {

/// Base class for all library failures.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A requested lattice or path table would exceed the configured memory cap.
class SizingError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration (constants out of range, unresolved registry name,
/// malformed config document, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Iterative solver failed to converge within its budget.
class SolverError : public Error {
public:
  SolverError(const std::string& what, double last_residual)
      : Error(what), last_residual(last_residual) {}
  double last_residual;
};

/// Coefficient evaluation produced a non-finite value; `witness` holds the
/// offending sample serialized as JSON text.
class EvaluationError : public Error {
public:
  EvaluationError(const std::string& what, std::string witness)
      : Error(what), witness(std::move(witness)) {}
  std::string witness;
};

/// A study was asked for with too few data points to fit anything.
class InsufficientDataError : public Error {
public:
  using Error::Error;
};

}  // namespace bdsde
