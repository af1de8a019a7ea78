#pragma once

#include <stdexcept>
#include <string>

namespace dwelldos {

enum class ErrorKind {
    validation,
    no_open_channel,
    threshold_proximity,
    threshold_crossing,
    bound_state_pole,
    numerical_failure,
    closed_channel,
    coverage,
    step_too_large,
    insufficient_data,
    config,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::validation: return "validation";
        case ErrorKind::no_open_channel: return "no_open_channel";
        case ErrorKind::threshold_proximity: return "threshold_proximity";
        case ErrorKind::threshold_crossing: return "threshold_crossing";
        case ErrorKind::bound_state_pole: return "bound_state_pole";
        case ErrorKind::numerical_failure: return "numerical_failure";
        case ErrorKind::closed_channel: return "closed_channel";
        case ErrorKind::coverage: return "coverage";
        case ErrorKind::step_too_large: return "step_too_large";
        case ErrorKind::insufficient_data: return "insufficient_data";
        case ErrorKind::config: return "config";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace dwelldos
