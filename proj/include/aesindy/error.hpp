#pragma once

#include <stdexcept>
#include <string>

namespace aesindy {

/// Malformed input data, files, or configuration. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Divergence, blow-up, or solver failure. The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No periodic orbit could be found or the branch shrank onto an equilibrium.
class CollapseError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace aesindy
