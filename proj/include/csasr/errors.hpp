#pragma once

#include <stdexcept>
#include <string>

namespace csasr {

// Shape or dimension disagreement between tensors/layers.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric-domain violation (log of non-positive, exp overflow).
struct NumericDomainError : std::runtime_error {
    explicit NumericDomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated API contract (non-scalar loss, reused tape, missing gradient).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Target cannot be aligned within the given number of frames.
struct CtcInfeasibleError : std::runtime_error {
    explicit CtcInfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

// Brute-force oracle asked to enumerate too large an instance.
struct OracleScopeError : std::runtime_error {
    explicit OracleScopeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad on-disk artifact: wrong magic, version, truncation, shape mismatch.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value or missing field.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Utterance task incompatible with the model kind's head layout.
struct RoutingError : std::runtime_error {
    explicit RoutingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shared-encoder architectures disagree during parameter transfer.
struct TransferError : std::runtime_error {
    explicit TransferError(const std::string& msg) : std::runtime_error(msg) {}
};

// A stage was run before the artifact it depends on exists.
struct DependencyError : std::runtime_error {
    explicit DependencyError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace csasr
