#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace filterstab {

/// Malformed or out-of-domain arguments (non-finite entries, bad dimensions).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A matrix expected to be positive-semidefinite has a clearly negative eigenvalue.
class IndefiniteMatrix : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Functional variant does not match the requested operation (continuous vs discrete).
class VariantMismatch : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Requested cubature rule would be too large to materialise.
class RuleTooLarge : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Simulation or filter produced a non-finite value. Carries the step index.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Filter covariance collapsed (trace below 1e-14).
class DegenerateCovariance : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A hypothesis required for a stability certificate does not hold.
/// `hypothesis()` names the failed condition for reports.
class CertificateError : public std::runtime_error {
 public:
  CertificateError(std::string hypothesis, const std::string& detail)
      : std::runtime_error(hypothesis + ": " + detail), hypothesis_(std::move(hypothesis)) {}

  const std::string& hypothesis() const noexcept { return hypothesis_; }

 private:
  std::string hypothesis_;
};

}  // namespace filterstab
