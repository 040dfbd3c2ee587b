#pragma once

#include <stdexcept>
#include <string>

namespace lotcrs {

// Malformed input file contents (bad JSON, missing fields, bad shapes).
class ParseError : public std::runtime_error {
public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally well-formed input that violates a domain invariant
// (duplicate ids, unknown item references, non-alternating roles, ...).
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller passed an out-of-domain argument (k = 0, negative weight, ...).
class ArgumentError : public std::invalid_argument {
public:
  explicit ArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numerical failure (non-finite loss, zero-norm vector where a direction
// is required).
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// I/O failure (missing file, short read, checksum mismatch).
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lotcrs
