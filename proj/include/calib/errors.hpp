#pragma once

#include <stdexcept>
#include <string>

namespace calib {

// Base class for all library errors.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user-facing configuration (CLI config file, option strings).
class ConfigError : public Error {
  public:
    using Error::Error;
};

// Malformed or unusable input data (CSV parse, NaN cells, too few rows).
class DataError : public Error {
  public:
    using Error::Error;
};

// A score was handed a prediction variant it cannot consume.
class VariantMismatchError : public Error {
  public:
    using Error::Error;
};

// Numerically unusable inputs: degenerate interval, zero std, empty
// conformal set, out-of-range probabilities.
class DomainError : public Error {
  public:
    using Error::Error;
};

// An operation required a non-empty input sequence.
class EmptyInputError : public Error {
  public:
    using Error::Error;
};

// Iterative fit stopped before reaching the requested accuracy.
class ConvergenceError : public Error {
  public:
    ConvergenceError(const std::string& msg, double achieved)
        : Error(msg), achieved_accuracy(achieved) {}
    double achieved_accuracy;
};

// Root bracketing failed (inverse CDF, conformal interval endpoints).
class BracketError : public Error {
  public:
    using Error::Error;
};

// Calibration data overlaps the rows the base predictor was trained on.
class ProvenanceError : public Error {
  public:
    using Error::Error;
};

}  // namespace calib
