#pragma once

#include <stdexcept>
#include <string>

namespace har {

// Base class for all toolkit errors. Subclasses map onto the CLI exit
// codes documented in tools/har_forge.cpp.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input: unknown flags, inconsistent config values.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Data that cannot be processed: wrong shapes, empty classes, unknown labels.
class DataError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// A raw sensor line that does not parse. Carries the 1-based line number
// when known (0 = unknown).
class MalformedRecord : public DataError {
public:
    MalformedRecord(const std::string& msg, std::size_t line_no = 0)
        : DataError(line_no ? "line " + std::to_string(line_no) + ": " + msg : msg),
          line_number(line_no) {}
    std::size_t line_number;
};

class UnknownActivity : public DataError {
public:
    using DataError::DataError;
};

class EmptyClass : public DataError {
public:
    using DataError::DataError;
};

class NotFitted : public DataError {
public:
    using DataError::DataError;
};

class ShapeMismatch : public DataError {
public:
    using DataError::DataError;
};

class LengthMismatch : public DataError {
public:
    using DataError::DataError;
};

class UnknownLabel : public DataError {
public:
    using DataError::DataError;
};

class SingularErrorMatrix : public DataError {
public:
    using DataError::DataError;
};

class InsufficientData : public DataError {
public:
    using DataError::DataError;
};

// Training produced a non-finite loss; the run is aborted.
class NonFiniteLoss : public Error {
public:
    using Error::Error;
};

} // namespace har
