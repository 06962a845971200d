#pragma once

#include <stdexcept>
#include <string>

namespace wpcm {

// Argument outside the mathematical domain of an operation (e.g. a wind
// speed outside the spline boundary, a quantile at 0 or 1).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Linear algebra or iterative solver failure.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data (CSV schema, checkpoint JSON).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Data present but insufficient for the requested fit.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wpcm
