#pragma once

#include <stdexcept>
#include <string>

namespace loc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, violated preconditions, inconsistent shapes.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: divergence, solver non-convergence, degenerate geometry.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

}  // namespace loc
