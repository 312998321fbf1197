#pragma once

#include <stdexcept>
#include <string>

namespace curvlab {

// Base of every library failure. exit_code() feeds the CLI contract:
// 2 input, 3 runtime, 4 mathematical precondition.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 3; }
};

class InputError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

// Shapes, grids or scenario counts do not line up.
class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

// A data object violates its stated invariants.
class ValidationError : public InputError {
 public:
  using InputError::InputError;
};

class SimulationError : public Error {
 public:
  using Error::Error;
};

// Evaluation left the region where an object is defined (e.g. a gauge
// transform producing a non-positive term structure).
class DomainError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

// Division by a vanishing portfolio value or ODE denominator.
class SingularityError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

}  // namespace curvlab
