#pragma once

#include <stdexcept>
#include <string>

namespace ctstd {

/// Base class for all ctstd errors. CLI exit codes: validation -> 2,
/// integrity -> 3, numeric/training -> 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad inputs, bad configs, violated preconditions.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Dimension or length mismatches. A kind of validation error.
class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Inconsistent or unusable configuration.
class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Out-of-range index, e.g. a diffusion step outside [1, T].
class IndexError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Paired inputs whose lengths or name orders do not line up.
class AlignmentError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Checksum mismatches, tampered or corrupt artifacts.
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or other numerical failures.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Training diverged; message carries epoch and batch.
class TrainingError : public NumericError {
public:
    TrainingError(const std::string& what, int epoch, int batch)
        : NumericError(what + " (epoch " + std::to_string(epoch) +
                       ", batch " + std::to_string(batch) + ")"),
          epoch(epoch), batch(batch) {}
    int epoch;
    int batch;
};

}  // namespace ctstd
