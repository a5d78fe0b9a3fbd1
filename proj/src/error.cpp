#include "lumap/error.hpp"

namespace lumap {

void throw_config(const std::string& msg) { throw Error(ErrorKind::Config, msg); }
void throw_io(const std::string& msg) { throw Error(ErrorKind::IO, msg); }
void throw_protocol(const std::string& msg) { throw Error(ErrorKind::Protocol, msg); }
void throw_backend(const std::string& msg) { throw Error(ErrorKind::Backend, msg); }
void throw_validation(const std::string& msg) { throw Error(ErrorKind::Validation, msg); }

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return "config";
        case ErrorKind::IO: return "io";
        case ErrorKind::Protocol: return "protocol";
        case ErrorKind::Backend: return "backend";
        case ErrorKind::Validation: return "validation";
    }
    return "unknown";
}

}  // namespace lumap
