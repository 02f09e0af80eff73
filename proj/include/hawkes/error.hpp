#pragma once

#include <stdexcept>
#include <string>

namespace hawkes {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad model parameters or a non-finite kernel/rate evaluation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Arguments outside the domain of an operation (time off-grid, mismatched grids).
class DomainError : public Error {
 public:
  using Error::Error;
};

class SolverDivergence : public Error {
 public:
  SolverDivergence(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Poisson tail or boundary flux above the configured threshold.
class TruncationError : public Error {
 public:
  using Error::Error;
};

class SimulationAbort : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public Error {
 public:
  ConditioningError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace hawkes
