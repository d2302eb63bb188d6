#pragma once

#include <stdexcept>
#include <string>

namespace fluidrisk {

// Invalid model structure or parameters. The CLI maps this to exit code 2.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the domain of an operation (negative duration, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// gamma fails to bound the exit rate at some duration.
class BoundViolation : public ModelError {
 public:
  BoundViolation(double u, int state);
  double u() const { return u_; }
  int state() const { return state_; }

 private:
  double u_;
  int state_;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iteration or truncation did not reach tolerance. CLI exit code 3.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fluidrisk
