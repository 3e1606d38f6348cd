// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace skytrace {

// Base error carrying a stable machine-readable category. The CLI prints
// "error: <category>: <message>" and maps every failure to exit code 1.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

// Tensor/matrix dimension mismatch. Messages name both offending shapes.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

// Violated call contract (empty input, non-scalar loss, ...).
class ContractError : public Error {
public:
    explicit ContractError(const std::string& message) : Error("contract", message) {}
};

// Invalid configuration value or infeasible derived configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

// Malformed input file structure (missing column, bad manifest, ...).
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& message) : Error("schema", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io", message) {}
};

// Non-finite gradients or loss during optimization.
class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& message) : Error("training", message) {}
};

} // namespace skytrace
