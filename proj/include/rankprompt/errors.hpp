#pragma once

#include <stdexcept>
#include <string>

namespace rankprompt {

/// Operand shapes do not fit the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced (or would produce) a NaN/Inf or a zero-norm row.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or unknown/missing key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed on-disk record (checkpoint, prototype file, CSV).
class FormatError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, Truncated, NonFinite, ChecksumMismatch, Parse, Io };

  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace rankprompt
