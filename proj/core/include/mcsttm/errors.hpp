#pragma once

#include <stdexcept>
#include <string>

namespace mcsttm {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Misuse of an API precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files.
class InputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Anchor whose windows fall outside the series.
class WindowError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during training.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch, int batch)
      : Error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

// Checkpoint file that is corrupt or does not match the expected model.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcsttm
