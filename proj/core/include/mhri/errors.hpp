#pragma once

#include <stdexcept>
#include <string>

namespace mhri {

// Error taxonomy shared across the library. User-facing tools map these to
// exit codes: input/configuration problems are user errors, the rest are
// internal faults.

/// Tensor shape disagreement between operands.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration value (hyperparameters, generator settings, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Class index out of range in a labeled training target.
struct LabelError : std::runtime_error {
    explicit LabelError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Optimizer state inconsistent with the requested step.
struct TrainingStateError : std::runtime_error {
    explicit TrainingStateError(const std::string& msg) : std::runtime_error(msg) {}
};

/// API contract violated by the caller (wrong arity, misaligned inputs, ...).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input text (dataset lines, config files).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Well-formed input that violates a dataset invariant.
struct SchemaError : std::runtime_error {
    explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Value that cannot be represented in the on-disk format.
struct SerializationError : std::runtime_error {
    explicit SerializationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem failure.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Sequence longer than the configured model capacity.
struct CapacityError : std::runtime_error {
    explicit CapacityError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite loss encountered during training.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Unreadable or inconsistent checkpoint file.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mhri
