#pragma once

#include <stdexcept>
#include <string>

namespace grip {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An argument violates a documented precondition (index range, sign, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Non-finite values, divergence or an iterative solve that missed its tolerance.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, long iteration = -1, double residual = -1.0)
      : Error(what), iteration_(iteration), residual_(residual) {}
  long iteration() const { return iteration_; }
  double residual() const { return residual_; }

 private:
  long iteration_;
  double residual_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace grip
