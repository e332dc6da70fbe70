#pragma once

#include <stdexcept>
#include <string>

namespace coach {

// Base of every error raised by the library. Components that must never
// throw (tool dispatch) convert these into observations instead.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed canonical document or model output. The message names the
// offending field where one exists.
class ParseError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class TransportError : public Error {
public:
    TransportError(const std::string& what, int attempts)
        : Error(what + " (after " + std::to_string(attempts) + " attempt" + (attempts == 1 ? "" : "s") + ")"),
          attempts_(attempts) {}

    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

class ScriptError : public Error {
public:
    using Error::Error;
};

class IngestError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class RegistryError : public Error {
public:
    using Error::Error;
};

class AnalyticsError : public Error {
public:
    using Error::Error;
};

}  // namespace coach
