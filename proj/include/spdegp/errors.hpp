#pragma once

#include <cstddef>
#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>

namespace spdegp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Factorization or solver failure (CLI exit code 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// File-system or format problem (CLI exit code 4).
class IoError : public Error {
public:
    using Error::Error;
};

class DimensionError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class NotPositiveDefinite : public NumericalError {
public:
    NotPositiveDefinite(std::size_t pivot, std::size_t original_index, double value)
        : NumericalError("matrix is not positive definite: non-positive pivot " +
                         std::to_string(value) + " at step " + std::to_string(pivot) +
                         " (row " + std::to_string(original_index) + ")"),
          pivot_(pivot), original_(original_index) {}

    std::size_t pivot() const noexcept { return pivot_; }
    std::size_t original_index() const noexcept { return original_; }

private:
    std::size_t pivot_;
    std::size_t original_;
};

using WarningSink = std::function<void(const std::string&)>;

inline WarningSink& warning_sink() {
    static WarningSink sink = [](const std::string& msg) {
        std::cerr << "warning: " << msg << '\n';
    };
    return sink;
}

inline void warn(const std::string& msg) {
    if (warning_sink()) warning_sink()(msg);
}

/// Swaps the warning sink for the lifetime of the guard.
class ScopedWarningSink {
public:
    explicit ScopedWarningSink(WarningSink sink) : saved_(warning_sink()) {
        warning_sink() = std::move(sink);
    }
    ~ScopedWarningSink() { warning_sink() = std::move(saved_); }
    ScopedWarningSink(const ScopedWarningSink&) = delete;
    ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

private:
    WarningSink saved_;
};

} // namespace spdegp
