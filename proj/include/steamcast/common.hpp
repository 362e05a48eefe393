#pragma once

#include <stdexcept>
#include <string>

namespace steamcast {

// One floating precision repo-wide. Double keeps the loop-oracle and
// finite-difference tolerances (1e-10 .. 1e-12) meaningful.
using real = double;

// User/configuration errors map to CLI exit code 1; anything else is an
// internal invariant violation and maps to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : ConfigError {
    long byte_offset;
    FormatError(const std::string& msg, long offset)
        : ConfigError(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
};

struct EvalError : ConfigError {
    explicit EvalError(const std::string& msg) : ConfigError(msg) {}
};

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct BoundsError : std::runtime_error {
    explicit BoundsError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AggregationError : std::runtime_error {
    explicit AggregationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct GradCheckError : std::runtime_error {
    explicit GradCheckError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace steamcast
