#pragma once

#include <stdexcept>
#include <string>

namespace dggx {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument outside its permitted range (kernel size, rate, step count...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Data that violates a precondition (non one-hot labels, empty class...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked on an object in the wrong state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Invalid model/backbone/run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Missing or inaccessible path.
class PathError : public Error {
 public:
  using Error::Error;
};

/// One or more input files could not be decoded; what() lists each path.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace dggx
