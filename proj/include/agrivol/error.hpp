#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agrivol {

/// Category of a failure. The CLI maps these onto process exit codes.
enum class ErrorKind {
    argument,           // caller passed an invalid argument
    domain,             // value outside the mathematical domain (e.g. ln of 0)
    insufficient_data,  // series too short for the requested operation
    numeric,            // overflow / non-finite intermediate
    fit,                // model estimation failed
    config,             // configuration file invalid
    data,               // input file malformed or inconsistent
    io,                 // filesystem failure
    missing_upstream,   // pipeline stage artifact missing
};

[[nodiscard]] constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::argument: return "argument";
        case ErrorKind::domain: return "domain";
        case ErrorKind::insufficient_data: return "insufficient-data";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::fit: return "fit";
        case ErrorKind::config: return "config";
        case ErrorKind::data: return "data";
        case ErrorKind::io: return "io";
        case ErrorKind::missing_upstream: return "missing-upstream";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) {
        throw Error(kind, message);
    }
}

}  // namespace agrivol
