// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sir {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition on an argument violated (empty input, bad count, unknown id).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes are incompatible for the requested op.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Value outside the mathematical domain of an op (e.g. log of x <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required (gradients, losses).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Internal bookkeeping mismatch, e.g. a sample id absent from a history.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration. `field` is the dotted path of the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Malformed or inconsistent input file. `line` is 1-based, 0 when not tied to a line.
class IngestError : public Error {
 public:
  IngestError(const std::string& path, std::size_t line, const std::string& message)
      : Error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Checkpoint container could not be read or does not match expectations.
class CheckpointError : public Error {
 public:
  CheckpointError(std::size_t offset, const std::string& message)
      : Error("checkpoint error at byte " + std::to_string(offset) + ": " + message),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace sir
