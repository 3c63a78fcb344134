#pragma once

#include <stdexcept>
#include <string>

namespace hirrr {

// Base of everything the library throws. The CLI maps ArgumentError/ConfigError
// to a usage failure and everything else to a data failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Value outside the support of a distribution or a metric.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Input with no usable variation (single-class outcome, empty cohort).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Unreadable or malformed input/output file.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hirrr
