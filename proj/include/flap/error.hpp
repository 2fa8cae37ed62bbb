#pragma once

#include <stdexcept>
#include <string>

namespace flap {

// Base for every error raised by the library. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Array or vector sizes that do not match what an operation expects.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file, bad magic, unknown version.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Input that is finite and well-shaped but numerically unusable
// (parallel 6D columns, zero-variance series, non-finite landmarks).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or stage ordering.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace flap
