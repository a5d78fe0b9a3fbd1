#pragma once

#include <stdexcept>
#include <string>

namespace lumap {

/// Failure classes. The CLI maps each kind onto its own exit code.
enum class ErrorKind {
    Config,      // bad configuration or usage
    IO,          // file system, file format
    Protocol,    // tile wire protocol violations
    Backend,     // classifier failures, training divergence
    Validation,  // precondition / invariant violations on data
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void throw_config(const std::string& msg);
[[noreturn]] void throw_io(const std::string& msg);
[[noreturn]] void throw_protocol(const std::string& msg);
[[noreturn]] void throw_backend(const std::string& msg);
[[noreturn]] void throw_validation(const std::string& msg);

const char* to_string(ErrorKind kind);

}  // namespace lumap
