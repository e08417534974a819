#pragma once

#include <stdexcept>
#include <string>

namespace adaptkan {

/// Invalid configuration or argument (maps to CLI exit code 2).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input data violating a precondition, e.g. non-finite samples.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values produced while evaluating or training a network
/// (maps to CLI exit code 1).
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, int layer = -1)
        : std::runtime_error(what), layer_(layer) {}

    /// Index of the offending layer, or -1 when not layer specific.
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

/// File could not be read, written or parsed (maps to CLI exit code 3).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace adaptkan
