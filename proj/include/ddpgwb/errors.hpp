#pragma once

#include <stdexcept>
#include <string>

namespace ddpgwb {

/// Bad user configuration (unknown key, out-of-range value, inconsistent flags).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite loss or gradient appeared during training.
class NumericalFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke an API precondition (stepping a finished episode, sampling an
/// empty buffer, mismatched network shapes).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace ddpgwb
