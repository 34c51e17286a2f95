#ifndef PROTOSEL_ERROR_HPP
#define PROTOSEL_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace protosel {

/// Base class for every recoverable error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed tabular input. Carries the 1-based line number when known.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    explicit FormatError(const std::string& what) : Error(what) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_ = 0;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

/// A neighbor search or classification was attempted against no prototypes.
class EmptySetError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// Corrupt or truncated binary database.
class LoadError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration, including degenerate validation sets.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Caller broke a documented precondition.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline void require(bool condition, const char* message) {
    if (!condition) {
        throw ContractViolation(message);
    }
}

}  // namespace protosel

#endif
