#pragma once

#include <stdexcept>
#include <string>

namespace hardneg {

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class DegenerateEmbeddingError : public Error {
public:
    DegenerateEmbeddingError(std::size_t row, double norm)
        : Error("degenerate embedding: row " + std::to_string(row) + " has norm " +
                std::to_string(norm)),
          row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class InsufficientNegativesError : public Error {
public:
    using Error::Error;
};

class OracleError : public Error {
public:
    using Error::Error;
};

class EmptySupportError : public Error {
public:
    using Error::Error;
};

// Configuration problems. The CLI maps these to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Dataset problems. The CLI maps these (and subclasses) to exit code 3.
class DataError : public Error {
public:
    using Error::Error;
};

class MalformedHeaderError : public DataError {
public:
    using DataError::DataError;
};

class TruncatedPayloadError : public DataError {
public:
    using DataError::DataError;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

class ChecksumError : public DataError {
public:
    using DataError::DataError;
};

class StratificationError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace hardneg
