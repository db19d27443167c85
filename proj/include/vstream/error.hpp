#pragma once

#include <stdexcept>
#include <string>

namespace vstream {

// Every failure raised by the library derives from Error; the category decides
// the CLI exit code (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of operands do not chain.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf showed up where a finite value was required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Input data is malformed or violates a graph invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

// A metric or loss is undefined on the given input (e.g. empty edge set).
class UndefinedMetricError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyTestSetError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace vstream
