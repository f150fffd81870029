#pragma once

#include <stdexcept>
#include <string>

namespace pedgen {

// Error taxonomy. Callers can tell apart bad user input, broken call
// contracts, numeric blowups, and plain I/O failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pedgen
