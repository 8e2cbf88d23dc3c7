#pragma once

#include <stdexcept>
#include <string>

namespace gamerecover {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch, out-of-range index or otherwise malformed argument.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Random game construction could not satisfy its postconditions.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// The equilibrium subspace is trivial; only x* = 0 exists.
class NoEquilibriumError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidInput(message);
}

}  // namespace detail
}  // namespace gamerecover
