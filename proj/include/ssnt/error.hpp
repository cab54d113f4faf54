#pragma once

#include <stdexcept>
#include <string>

namespace ssnt {

// All library errors derive from Error so the C API can map them onto
// status codes in one place.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (corpora, vocabularies, ids).
class DataError : public Error {
 public:
  using Error::Error;
};

// Violated call contract, e.g. backward() on a non-scalar node.
class ContractError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Two models that must share a vocabulary do not.
class VocabularyMismatch : public Error {
 public:
  using Error::Error;
};

// An internal bookkeeping invariant failed (a bug, not bad input).
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace ssnt
