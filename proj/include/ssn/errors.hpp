#pragma once

#include <stdexcept>
#include <string>

namespace ssn {

// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents disagree with declared S, C, R or with each other.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input values violate a documented contract (non-finite entry, label out of
// range, broken tiling, malformed file contents, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A factorization failed even after jitter escalation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A per-sample log-likelihood or a parameter became non-finite. The toy
// trainer treats this as its early-stopping signal.
class OverflowError : public Error {
 public:
  using Error::Error;
};

// Mean pre-training produced non-finite parameters (learning rate too large).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Dense oracles refuse to materialize matrices past a size guard.
class SizeGuardError : public Error {
 public:
  using Error::Error;
};

// Filesystem read/write failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ssn
