#pragma once

#include <stdexcept>
#include <string>

namespace clab {

enum class ErrorCode {
    invalid_argument,
    domain,
    protocol_violation,
    conflict,
    not_found,
    unauthorized,
    forbidden,
    unrealizable,
};

inline const char* to_string(ErrorCode c) {
    switch (c) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::domain: return "domain";
    case ErrorCode::protocol_violation: return "protocol_violation";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::unauthorized: return "unauthorized";
    case ErrorCode::forbidden: return "forbidden";
    case ErrorCode::unrealizable: return "unrealizable";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, const std::string& msg, ErrorCode code = ErrorCode::invalid_argument) {
    if (!cond) throw Error(code, msg);
}

} // namespace clab
