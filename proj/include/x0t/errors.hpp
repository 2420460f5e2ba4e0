#pragma once

#include <stdexcept>

namespace x0t {

// Array dimensions disagree.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Timestep not in the schedule, or a step pair in the wrong noise order.
struct ScheduleError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Scalar parameter outside its documented range.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// A precondition between modules was violated by the caller.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Failure inside a backend implementation, or backend unavailable.
struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad or missing configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Token or layer lookup out of range.
struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// I/O failure (files, archives, images).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace x0t
