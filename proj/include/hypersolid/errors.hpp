#pragma once

#include <stdexcept>
#include <string>

namespace hypersolid {

// Error taxonomy. The CLI maps these onto exit codes:
// ConfigError -> 2, FormatError/ArgumentError/DimensionError -> 3, NumericError -> 4.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArgumentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace hypersolid
