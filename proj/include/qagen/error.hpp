#pragma once

#include <stdexcept>
#include <string>

namespace qagen {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (bad JSON, missing fields, missing header).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input whose records violate a data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration key, flag, or argument combination.
class UsageError : public Error {
 public:
  using Error::Error;
};

class ScoringError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace qagen
