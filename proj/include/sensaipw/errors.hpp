#pragma once

#include <stdexcept>
#include <string>

namespace sensaipw {

// Error classes map one-to-one onto the CLI exit codes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// The postulated correlation is incompatible with the observed residual
/// variance: the corrected-sigma denominator is not positive.
class InvalidRho : public NumericalError {
 public:
  InvalidRho(double rho, double denominator)
      : NumericalError("sensitivity parameter rho=" + std::to_string(rho) +
                       " gives corrected-sigma denominator " +
                       std::to_string(denominator)),
        rho_(rho),
        denominator_(denominator) {}

  double rho() const noexcept { return rho_; }
  double denominator() const noexcept { return denominator_; }

 private:
  double rho_;
  double denominator_;
};

}  // namespace sensaipw
