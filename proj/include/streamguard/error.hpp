#pragma once

#include <stdexcept>
#include <string>

namespace streamguard {

/// Invalid configuration or hyperparameters. CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or insufficient input data. CLI exit code 3.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numeric failure at run time (NaN loss, degenerate calibration). CLI exit code 4.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Not enough records to form a single supervised training pair.
/// The drift module treats this as "keep collecting".
class InsufficientDataError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace streamguard
