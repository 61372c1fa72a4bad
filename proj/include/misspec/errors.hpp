#pragma once

#include <stdexcept>
#include <string>

namespace misspec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad dimensions, non-finite entries, out-of-domain parameters.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A matrix factorization (Cholesky) failed.
class DecompositionError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be inverted is singular or too badly conditioned.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// The requested operation is not supported by a model or model pair.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// A function evaluation produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

}  // namespace misspec
