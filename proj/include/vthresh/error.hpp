#pragma once

#include <stdexcept>
#include <string>

namespace vthresh {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value (grid size, bandwidth bounds, weights, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation (score not in [0,1], ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class InvalidBandwidth : public Error {
 public:
  using Error::Error;
};

/// Not enough observations to compute the requested statistic.
class InsufficientData : public Error {
 public:
  using Error::Error;
};

}  // namespace vthresh
