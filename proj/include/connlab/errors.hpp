#pragma once

#include <stdexcept>
#include <string>

namespace connlab {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unknown algebra name, malformed domain parameters, bad config values.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

// Operands built over different algebras, or incompatible matrix shapes.
class TypeMismatch : public Error {
 public:
  using Error::Error;
};

// Operands living on different domains.
class DomainMismatch : public Error {
 public:
  using Error::Error;
};

// Form degree out of range for the operation (p + q > d, d of a top form...).
class DegreeError : public Error {
 public:
  using Error::Error;
};

// Operation not available on this backend (e.g. refining a polynomial field).
class UnsupportedBackend : public Error {
 public:
  using Error::Error;
};

// A witness constructor whose precondition does not hold.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

}  // namespace connlab
