#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>

namespace magtomo {

// Broad failure class, mapped onto CLI exit codes.
enum class ErrorKind { config, numerical, io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& what)
        : std::runtime_error(what), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

#define MAGTOMO_ERROR(Name, Kind)                                   \
    class Name : public Error {                                     \
    public:                                                         \
        explicit Name(const std::string& what)                      \
            : Error(ErrorKind::Kind, #Name, what) {}                \
    };

MAGTOMO_ERROR(InvalidArgument, config)
MAGTOMO_ERROR(ConfigError, config)
MAGTOMO_ERROR(SchemaViolation, config)
MAGTOMO_ERROR(NotPure, config)
MAGTOMO_ERROR(UnsupportedState, config)
MAGTOMO_ERROR(InvalidDensityMatrix, numerical)
MAGTOMO_ERROR(NegativeExpectation, numerical)
MAGTOMO_ERROR(QuadratureFailure, numerical)
MAGTOMO_ERROR(DegenerateTheta, numerical)
MAGTOMO_ERROR(ZeroProbabilitySample, numerical)
MAGTOMO_ERROR(ResonanceDivergence, numerical)
MAGTOMO_ERROR(LikelihoodDecrease, numerical)
MAGTOMO_ERROR(IoError, io)

#undef MAGTOMO_ERROR

struct Warning {
    std::string code;
    std::string message;
};

using WarningHandler = std::function<void(const Warning&)>;

namespace detail {
inline WarningHandler& warning_handler() {
    thread_local WarningHandler handler = [](const Warning& w) {
        std::cerr << "warning [" << w.code << "]: " << w.message << '\n';
    };
    return handler;
}
}  // namespace detail

inline void warn(const std::string& code, const std::string& message) {
    auto& h = detail::warning_handler();
    if (h) h(Warning{code, message});
}

// Installs a handler for the current thread; restores the previous one on exit.
class ScopedWarningHandler {
public:
    explicit ScopedWarningHandler(WarningHandler h)
        : saved_(std::exchange(detail::warning_handler(), std::move(h))) {}
    ~ScopedWarningHandler() { detail::warning_handler() = std::move(saved_); }
    ScopedWarningHandler(const ScopedWarningHandler&) = delete;
    ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

private:
    WarningHandler saved_;
};

}  // namespace magtomo
