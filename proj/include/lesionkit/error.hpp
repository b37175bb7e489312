#pragma once

#include <stdexcept>
#include <string>

namespace lesionkit {

// Base of every error the library raises. The CLI maps subclasses to exit
// codes: IoError -> 2, everything else -> 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument value or mismatched geometry.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A container invariant is violated (mask value 2, negative spacing, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed RVOL magic or header.
class FormatError : public Error {
 public:
  using Error::Error;
};

// RVOL payload shorter or longer than the header promises.
class TruncationError : public Error {
 public:
  using Error::Error;
};

// Missing or inconsistent study data (names case and rater).
class DataError : public Error {
 public:
  using Error::Error;
};

// Input that makes a statistic undefined, e.g. a sign test with only ties.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Phantom placement could not satisfy its constraints.
class GenerationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lesionkit
