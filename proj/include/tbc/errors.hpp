#pragma once

#include <stdexcept>
#include <string>

namespace tbc {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid grid, time ladder, potential, initial data or config file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the documented domain of an operation.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A parameter hits a pole of a formula (alpha = 4, vanishing g denominator).
class SingularParameterError : public Error {
 public:
  using Error::Error;
};

/// Out-of-order use of stateful objects (skipped step, short history).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Linear solver failed to reach its tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, int iterations, double residual)
      : Error(what), iterations_(iterations), residual_(residual) {}
  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

/// Metric undefined for the given inputs (e.g. zero reference norm).
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace tbc
