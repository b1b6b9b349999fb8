#pragma once

#include <stdexcept>
#include <string>

namespace rem {

// Bad input: malformed files, unknown identifiers, inconsistent configuration.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The numerics could not produce a trustworthy answer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RankDeficiencyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace rem
