#pragma once

#include <stdexcept>
#include <string>

namespace koop {

// Bad configuration, unknown keys, malformed files. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure at runtime: integration blow-up, divergence,
// non-convergence. CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or contract mismatch between components.
struct InterfaceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace koop
