#pragma once

#include <stdexcept>
#include <string>

namespace gcpl {

// Shape or dimension disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A non-finite value appeared (training divergence, bad input, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violation of a frozen-backbone or other usage contract.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or unsupported versioned file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace gcpl
