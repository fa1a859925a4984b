#pragma once

#include <stdexcept>
#include <string>

namespace afm {

enum class ErrorKind {
    InvalidInput,
    InvalidRank,
    InvalidParameter,
    InvalidIndex,
    Format,
    Io,
    Numerical,
    NonConvergence,
    Degenerate,
    Infeasible,
    UnstableDgp,
};

const char* to_string(ErrorKind kind) noexcept;

/// Base exception for every failure raised by the library. The kind drives
/// the CLI exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) throw Error(kind, what);
}

}  // namespace afm
