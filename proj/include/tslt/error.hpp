#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tslt {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid command-line flags or flag combinations.
class UsageError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data (CSV contents, labels, preprocessing).
class DataError : public Error {
public:
    using Error::Error;
};

// Columns required by a fitted preprocessor are absent from the input table.
class SchemaError : public DataError {
public:
    SchemaError(const std::string& what, std::vector<std::string> missing)
        : DataError(what), missing_(std::move(missing)) {}

    const std::vector<std::string>& missing_columns() const noexcept { return missing_; }

private:
    std::vector<std::string> missing_;
};

// Non-finite loss or gradient during training.
class NumericError : public Error {
public:
    using Error::Error;
};

class BundleError : public Error {
public:
    using Error::Error;
};

class BadMagicError : public BundleError {
public:
    using BundleError::BundleError;
};

class VersionMismatchError : public BundleError {
public:
    using BundleError::BundleError;
};

class TruncatedError : public BundleError {
public:
    using BundleError::BundleError;
};

class ChecksumError : public BundleError {
public:
    using BundleError::BundleError;
};

// Structurally invalid bundle contents (bad tags, shape mismatch, trailing bytes).
class BundleFormatError : public BundleError {
public:
    using BundleError::BundleError;
};

}  // namespace tslt
