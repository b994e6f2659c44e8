#pragma once

#include <stdexcept>
#include <string>

namespace freqact {

// Error taxonomy mirrors the CLI exit-code contract:
//   ConfigError -> 2, DataError -> 3, NumericError -> 4.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values detected in inputs or intermediate results.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatch between operands; message names the operator and the shapes.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace freqact
