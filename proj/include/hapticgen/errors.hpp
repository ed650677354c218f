#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hapticgen {

// Caller broke a precondition (bad shape, out-of-range parameter, unknown kind).
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// NaN/Inf produced by an op, or a diverging training loss.
class NumericFault : public std::runtime_error {
public:
    NumericFault(const std::string& op, std::size_t index)
        : std::runtime_error("non-finite value in op '" + op + "' at index " + std::to_string(index)),
          op_(op),
          index_(index) {}
    explicit NumericFault(const std::string& what) : std::runtime_error(what) {}

    const std::string& op() const noexcept { return op_; }
    std::size_t index() const noexcept { return index_; }

private:
    std::string op_;
    std::size_t index_ = 0;
};

// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    IoError(const std::string& what, const std::string& path)
        : std::runtime_error(what + ": " + path), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

// Malformed file contents; offset is the byte position where parsing failed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

// Checksum or magic mismatch.
class IntegrityError : public std::runtime_error {
public:
    explicit IntegrityError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractViolation(msg);
}

}  // namespace hapticgen
