#pragma once

#include <stdexcept>
#include <string>

namespace icsc {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration value supplied by a caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// File-system or encoding failure; the message carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during training or evaluation (non-finite loss, etc).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace icsc
