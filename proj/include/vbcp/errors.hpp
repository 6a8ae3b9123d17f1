#pragma once

#include <stdexcept>
#include <string>

namespace vbcp {

/// Bad inputs: shape mismatches, rank-deficient side information,
/// out-of-range indices, malformed options or config files.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown, e.g. a covariance that is not positive definite
/// after the jitter escalation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem problems, always carrying the offending path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vbcp
