#pragma once

#include <stdexcept>
#include <string>

namespace dualfreq {

// Base of every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible extents, non-divisible window sizes, odd DWT inputs.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// FFT extents that are not powers of two.
class UnsupportedSizeError : public DimensionError {
 public:
  using DimensionError::DimensionError;
};

// A precondition of an operation was violated (non-scalar loss, negative
// amplitude, lambda outside [0, 1], ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf appeared where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dualfreq
