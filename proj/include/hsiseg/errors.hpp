#pragma once

#include <stdexcept>
#include <string>

namespace hsiseg {

// Invalid or inconsistent user configuration (bad values, unknown keys,
// malformed JSON).  The command-line driver maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unusable data: degenerate geometry after all retries, corrupt dataset
// files, manifest mismatches.  Exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during optimization (non-finite loss or parameters).
// Exit code 4.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hsiseg
