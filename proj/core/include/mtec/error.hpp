#pragma once

#include <stdexcept>
#include <string>

namespace mtec {

// Base of every exception thrown by the library. CLI maps subclasses onto
// exit codes, so keep the hierarchy shallow.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (bad cells, misaligned ids).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Feature schema problems: duplicate columns, unknown levels, header mismatch.
class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Site ids present in one input file but not the other.
class AlignmentError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Bad configuration values (thresholds, sample counts, group maps).
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// API misuse: stale tape, untrained model, wrong call order.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during training (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtec
