#pragma once

#include <stdexcept>
#include <string>

namespace gpabc {

// Exception hierarchy. The CLI maps each kind onto a distinct exit code.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BudgetExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SimulatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gpabc
