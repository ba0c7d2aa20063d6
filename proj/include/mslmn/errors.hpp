#pragma once

#include <stdexcept>
#include <string>

namespace mslmn {

// Base class for every error raised by the library. Subclasses name the
// failure category so callers (and the CLI) can map them to diagnostics.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericInputError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class ScalingError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (ragged CSV rows, bad JSON, bad config syntax).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Missing or unreadable input, or inconsistent auxiliary inputs.
class InputError : public Error {
 public:
  using Error::Error;
};

// Operation not valid for the task kind (e.g. generating from a classifier).
class ModeError : public Error {
 public:
  using Error::Error;
};

}  // namespace mslmn
