#pragma once

#include <stdexcept>
#include <string>

namespace rlrt {

// Malformed or out-of-range configuration. CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be read/written or has the wrong format. CLI exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not conform. CLI exit code 2.
class ShapeError : public IoError {
 public:
  using IoError::IoError;
};

// Singularity, non-finite intermediate, or unreachable calibration target.
// CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rlrt
