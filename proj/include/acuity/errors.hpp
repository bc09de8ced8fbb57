#pragma once

#include <stdexcept>
#include <string>

namespace acuity {

// Every failure raised by the library derives from Error so callers (the CLI
// in particular) can map the category to an exit code and message.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class StateError : public Error {
public:
    using Error::Error;
};

class PersistenceError : public Error {
public:
    using Error::Error;
};

class VersionError : public PersistenceError {
public:
    using PersistenceError::PersistenceError;
};

class ChecksumError : public PersistenceError {
public:
    using PersistenceError::PersistenceError;
};

/// A checksum failure whose cause is a file shorter than its own header
/// declares.
class TruncatedError : public ChecksumError {
public:
    using ChecksumError::ChecksumError;
};

} // namespace acuity
