#pragma once

#include <stdexcept>
#include <string>

namespace terranet {

/// Base class for all library failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor/layer shape disagreement.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside its valid domain (negative radius, empty input, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Filesystem or OS-level I/O failure.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed file content (bad record, checksum mismatch, version skew).
class ParseError : public IoError {
public:
    using IoError::IoError;
};

/// Non-finite values or a numerically failed computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid run configuration (schema violation, unknown key, bad range).
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace terranet
