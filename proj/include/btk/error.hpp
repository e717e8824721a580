#pragma once

#include <stdexcept>
#include <string>

namespace btk {

// Every failure surfaced by the library derives from Error; exit_code()
// is what the CLI returns when the error escapes a subcommand.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

// Caller violated a documented precondition (geometry mismatch, bad policy...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input data is well-formed but numerically unusable (NaN, constant volume...).
class DataError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class UnsupportedFormatError : public ParseError {
 public:
  using ParseError::ParseError;
};

class PlacementError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

}  // namespace btk
