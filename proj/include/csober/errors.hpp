#pragma once

#include <stdexcept>
#include <string>

namespace csober {

struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DegenerateInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OracleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateMeasure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SolverStall : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateBatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace csober
