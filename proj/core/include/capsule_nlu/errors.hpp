#pragma once

#include <stdexcept>
#include <string>

namespace capsnlu {

// Error taxonomy used across the library. The CLI maps these onto its
// exit-code contract: data/format/schema/config problems exit with 2,
// numeric failures with 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing files, malformed dataset lines, bad checkpoint bytes.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Label/vocabulary disagreements between datasets, configs and checkpoints.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (unknown keys, out-of-range hyperparameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor shape mismatches.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf values, diverged losses, domain violations.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace capsnlu
