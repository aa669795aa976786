#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oodnorm {

/// Bad or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Numeric divergence during optimization (CLI exit code 3).
struct TrainingError : std::runtime_error {
    TrainingError(const std::string& what, std::size_t step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step(step) {}
    std::size_t step;
};

/// Missing or malformed data: datasets, pools, model files (CLI exit code 4).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace oodnorm
