#pragma once

#include <stdexcept>
#include <string>

namespace cgt {

// Incompatible tensor shapes for a primitive or a parameter update.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input outside a primitive's mathematical domain (e.g. sqrt of a negative).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// NaN/Inf produced or consumed where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Index or class id outside the valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Invalid configuration or argument combination.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or incompatible serialized data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cgt
