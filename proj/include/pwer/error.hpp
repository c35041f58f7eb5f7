#pragma once

#include <stdexcept>
#include <string>

namespace pwer {

// Base for every error raised by the library. The CLI maps ConfigError to
// exit code 2 and everything numerical to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input: out-of-range parameters, malformed tables, unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A model that cannot be evaluated (e.g. no probability mass on any stratum,
// a population without treatment or control patients).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Numerical failure: matrix not PSD, root not bracketed, budget exhausted.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Integration tolerance not reached within the evaluation budget. Carries the
// best estimate so callers may decide to accept it.
class BudgetExceeded : public NumericalError {
 public:
  BudgetExceeded(const std::string& what, double best_value, double best_error)
      : NumericalError(what), value(best_value), error(best_error) {}
  double value;
  double error;
};

}  // namespace pwer
