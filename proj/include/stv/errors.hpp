#pragma once

#include <stdexcept>
#include <string>

namespace stv {

// Bad arguments: dimension mismatch, empty data, malformed files.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A mathematically invalid parameter, e.g. I + F not positive definite.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Non-finite values produced during a computation.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Object used before a required quantity was available.
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// Operation not available for this model/kernel combination.
struct UnsupportedError : std::logic_error {
  using std::logic_error::logic_error;
};

// File could not be read or written; the message names the path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace stv
