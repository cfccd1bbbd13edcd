#pragma once

#include <stdexcept>
#include <string>

namespace indistill {

// Root of every exception thrown by the library. Each subclass maps onto one
// failure family so the CLI can translate it into an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents disagree with what an op expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A scalar argument is outside its domain (temperature <= 0, p out of range...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Misuse of the gradient tape: backward twice, non-scalar loss, recording
// onto a consumed tape.
class TapeError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment or model configuration detected before any compute.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Teacher and student feature maps do not line up after channel selection.
class AlignmentError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// The curriculum cannot fit into the requested number of epochs.
class InfeasibleScheduleError : public ConfigError {
 public:
  InfeasibleScheduleError(const std::string& what, long long minimum_epochs)
      : ConfigError(what), minimum_epochs_(minimum_epochs) {}
  long long minimum_epochs() const noexcept { return minimum_epochs_; }

 private:
  long long minimum_epochs_;
};

// Malformed or missing dataset files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Checkpoint could not be decoded.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// A loss or parameter became NaN/Inf during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace indistill
