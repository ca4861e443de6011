#pragma once

#include <stdexcept>
#include <string>

namespace hmmclust {

/// Base class for every error raised by the library. `exit_code()` is the
/// process status the CLI reports for this category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Invalid argument or configuration value (dimensions, ranges, k > N, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Malformed or inconsistent input data (parse errors, bad symbols, missing artifacts).
class InputError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Numerical breakdown: zero-probability sequences, isolated graph vertices.
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

class DegenerateGraphError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace hmmclust
