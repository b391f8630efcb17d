#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nonhyp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Lexical or syntactic problem in an expression or map file.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t position)
        : Error(what + " at position " + std::to_string(position)), detail_(what), position_(position) {}
    std::size_t position() const { return position_; }
    /// Message without the position suffix.
    const std::string& detail() const { return detail_; }

private:
    std::string detail_;
    std::size_t position_;
};

/// A value left the domain where the operation is defined (non-finite results,
/// escaping orbits, out-of-range radii).
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative solver did not reach its tolerance.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Caller violated a documented precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Rejected configuration (unknown keys, bad ranges). Maps to CLI exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace nonhyp
