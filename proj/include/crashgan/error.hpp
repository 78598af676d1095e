#pragma once

#include <stdexcept>
#include <string>

namespace crashgan {

// Base of every error raised by the library. The CLI maps ValidationError
// (and its subclasses) to exit code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, bad shapes, malformed files.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Numerical failures during training or estimation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DegenerateResponse : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class CollinearFeatures : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace crashgan
