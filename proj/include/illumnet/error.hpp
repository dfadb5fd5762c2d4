#pragma once

#include <stdexcept>
#include <string>

namespace illumnet {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments or configuration supplied by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Missing, unreadable or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Degenerate numerics: divergence, zero statistics, solver failure.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace illumnet
