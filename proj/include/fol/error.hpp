#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fol {

/// Bad user input: malformed config, inconsistent sizes, unsupported options.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Any numerical failure (degenerate geometry, singular system, divergence).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateElementError : public NumericalError {
 public:
  DegenerateElementError(int element, double det_j);
  int element() const noexcept { return element_; }
  double det_j() const noexcept { return det_j_; }

 private:
  int element_;
  double det_j_;
};

/// Raised when a reduced system cannot be factorized (missing Dirichlet data,
/// unconstrained rigid modes).
class SingularSystemError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : NumericalError(what), history_(std::move(history)) {}
  const std::vector<double>& residual_history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// A loss term evaluated to NaN/Inf; `term()` names the offender.
class NonFiniteLossError : public NumericalError {
 public:
  NonFiniteLossError(std::string term, double value);
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

}  // namespace fol
