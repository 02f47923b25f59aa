#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace endo {

enum class ErrorKind {
    Io,          // unreadable/unwritable file
    Format,      // malformed or unsupported file content
    Invalid,     // bad argument or configuration
    Invariant,   // data violates a domain invariant
    NotFound,    // unknown label, session, file
    Numeric,     // NaN/inf during computation
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::Io: return "io";
        case ErrorKind::Format: return "format";
        case ErrorKind::Invalid: return "invalid";
        case ErrorKind::Invariant: return "invariant";
        case ErrorKind::NotFound: return "not_found";
        case ErrorKind::Numeric: return "numeric";
    }
    return "unknown";
}

/// Process exit status used by the command-line tool for each failure class.
inline int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::Io: return 3;
        case ErrorKind::Format: return 4;
        case ErrorKind::Invalid: return 2;
        case ErrorKind::Invariant: return 5;
        case ErrorKind::NotFound: return 6;
        case ErrorKind::Numeric: return 7;
    }
    return 1;
}

}  // namespace endo
