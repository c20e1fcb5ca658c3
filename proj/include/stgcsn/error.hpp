#pragma once

#include <stdexcept>
#include <string>

namespace stgcsn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class InvalidSizeError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

class IsolatedVertexError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// The requested scattering tree exceeds the configured node cap.
class TreeTooLargeError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Inconsistent model / run configuration (missing agent, bad variant, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable input data.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

/// NaN/Inf encountered in a loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace stgcsn
