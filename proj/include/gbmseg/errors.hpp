#pragma once

#include <stdexcept>
#include <string>

namespace gbmseg {

// Precondition / shape-contract breaches. These indicate caller bugs, not data
// problems, and are never caught internally.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// Data-dependent failures (bad files, empty masks, ...). The CLI maps these to
// exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class BadMagicError : public DataError {
public:
    explicit BadMagicError(const std::string& msg) : DataError(msg) {}
};

class TruncatedPayloadError : public DataError {
public:
    explicit TruncatedPayloadError(const std::string& msg) : DataError(msg) {}
};

class UnknownDtypeError : public DataError {
public:
    explicit UnknownDtypeError(const std::string& msg) : DataError(msg) {}
};

class VersionMismatchError : public DataError {
public:
    explicit VersionMismatchError(const std::string& msg) : DataError(msg) {}
};

class NameSetMismatchError : public DataError {
public:
    explicit NameSetMismatchError(const std::string& msg) : DataError(msg) {}
};

// Mask generation produced no voxels (wrong threshold, all-background labels).
class EmptyMaskError : public DataError {
public:
    explicit EmptyMaskError(const std::string& msg) : DataError(msg) {}
};

// Non-finite loss or similar numeric breakdown. CLI exit code 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace gbmseg
