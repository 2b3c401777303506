#pragma once

#include <stdexcept>

namespace ccv {

// Invalid parameters, observables, or run settings.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A state with zero total exit rate was reached.
class AbsorbingStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The generator has more than the one-dimensional null space of an
// irreducible chain.
class ReducibleChainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ccv
