#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace jcapa {

// Root of every error the library throws. The CLI maps subclasses to exit
// codes, so keep the hierarchy flat and meaningful.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// API misuse: non-scalar loss, double backward, empty tape.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (run config, augmentation, phantom priors).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid data values, e.g. an out-of-range class label.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Checkpoint does not match the model it is loaded into.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf during training or a failed gradient check.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed JCPT/JCKP bytes. Carries the offset at which decoding failed.
class FormatError : public IoError {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : IoError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace jcapa
