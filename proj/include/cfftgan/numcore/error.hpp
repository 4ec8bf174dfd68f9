#pragma once

#include <stdexcept>
#include <string>

namespace cfftgan {

/// Shape or signature mismatch inside a primitive or layer.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Misuse of the differentiation tape (detached loss, non-scalar loss).
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A non-finite value appeared where the contract forbids it.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated file, bad magic, version mismatch.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or unknown key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace cfftgan
