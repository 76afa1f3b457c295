#pragma once

#include <stdexcept>
#include <string>

namespace flowobs {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite or out-of-domain numeric input.
class DomainError : public Error {
public:
    using Error::Error;
};

// Invalid configuration (bad ranges, unknown keys, inconsistent sizes).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Time integration produced a non-finite state.
class IntegrationError : public Error {
public:
    IntegrationError(const std::string& what, double time)
        : Error(what + " at t=" + std::to_string(time) + " min"), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

// Malformed or unordered input data (CSV rows, gain files, measurement streams).
class IngestError : public Error {
public:
    using Error::Error;
};

}  // namespace flowobs
