#pragma once

#include <stdexcept>
#include <string>

namespace nilsynth {

/// Malformed or out-of-domain input. The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two independent computations disagree (exit code 3).
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative method missed its tolerance (exit code 4).
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nilsynth
