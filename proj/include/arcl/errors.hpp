// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace arcl {

/// Operand shapes do not satisfy an operation's precondition.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation produced NaN or Inf from finite inputs.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An API was called out of contract (missing classifier, index out of range, ...).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A configuration value is invalid. `field()` names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Training data of a finished task was touched again.
class DataFreeViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace arcl
