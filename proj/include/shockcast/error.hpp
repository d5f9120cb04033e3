#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shockcast {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A physical precondition is violated (non-positive temperature, negative
// internal energy, zero-variance correlation, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Invalid combination of settings, missing statistics, unsupported layer mix.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Misuse of the autodiff API (backward on a non-scalar, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// On-disk container problems: bad magic, version, truncation, schema mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

// The classical solver produced an inadmissible state.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

// A rollout exhausted its step budget before reaching the stop time.
class RunawayError : public Error {
 public:
  using Error::Error;
};

// A trajectory has too few snapshots for the requested operation.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Rollout interpolation queried outside the predicted time span.
class ExtrapolationError : public Error {
 public:
  using Error::Error;
};

class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace shockcast
