#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mct {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid user input: configuration values, strides, file contents.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Explicit step size violates the stability (CFL) restriction.
class StabilityError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during time integration or training.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Newton iteration of an implicit step did not reach tolerance.
class ImplicitSolveError : public Error {
 public:
  ImplicitSolveError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Dense linear system was singular to working precision.
class LinearSolveError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mct
