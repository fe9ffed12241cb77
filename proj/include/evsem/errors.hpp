#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evsem {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violated a documented precondition or type invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Argument lies outside the mathematical domain of an operation.
class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Text input could not be parsed. Carries the 1-based line number (0 when
/// the failure is not tied to a line).
class ParseError : public ValidationError {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : ValidationError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A serialized map failed to load (bad magic, truncation, invariant violation).
class LoadError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

}  // namespace evsem
