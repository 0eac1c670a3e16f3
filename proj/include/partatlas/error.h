#ifndef PARTATLAS_ERROR_H_
#define PARTATLAS_ERROR_H_

#include <stdexcept>
#include <string>

namespace partatlas {

// Malformed arguments to a library call (degenerate boxes, empty vectors).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad hyperparameters or an inconsistent combination of options.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Files, manifests and records that cannot be read or fail validation.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values produced during optimization.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace partatlas

#endif  // PARTATLAS_ERROR_H_
