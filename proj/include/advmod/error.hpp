#pragma once

#include <stdexcept>
#include <string>

namespace advmod {

// Each category maps to one CLI exit code (see tools/advmod.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class IncompatibleError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

/// Raised when gradients are requested from a model that has none.
class UnsupportedAttackError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public NumericalError {
 public:
  TrainingError(const std::string& what, int epoch)
      : NumericalError(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace advmod
