#pragma once

#include <stdexcept>
#include <string>

namespace rnade {

// Exit codes returned by the command-line tool. Each exception class below
// maps onto one of them.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
  kCorruptModel = 5,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept = 0;
};

// Bad arguments to a library call (shapes, ranges, non-finite inputs).
class ValidationError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kData; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

// File parsing and dataset problems.
class DataError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kData; }
};

// Non-finite values during training or gradient computation.
class NumericError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
};

class CorruptModelError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kCorruptModel; }
};

}  // namespace rnade
