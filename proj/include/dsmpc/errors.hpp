#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsmpc {

enum class ErrorCategory {
    InvalidArgument,
    DimensionMismatch,
    InvalidConfig,
    Infeasible,
    NonConvergence,
    Io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what)
        : Error(ErrorCategory::InvalidArgument, what) {}
};

class InvalidConfig : public Error {
public:
    explicit InvalidConfig(const std::string& what)
        : Error(ErrorCategory::InvalidConfig, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorCategory::Io, what) {}
};

// Carries the subsystem whose block dimensions did not match, when known.
class DimensionMismatch : public Error {
public:
    DimensionMismatch(const std::string& what, std::optional<std::size_t> subsystem = std::nullopt)
        : Error(ErrorCategory::DimensionMismatch, what), subsystem_(subsystem) {}

    std::optional<std::size_t> subsystem() const noexcept { return subsystem_; }

private:
    std::optional<std::size_t> subsystem_;
};

class InfeasibleProblem : public Error {
public:
    InfeasibleProblem(const std::string& what, std::vector<std::size_t> violated_rows = {},
                      double primal_residual = 0.0)
        : Error(ErrorCategory::Infeasible, what),
          violated_rows_(std::move(violated_rows)),
          primal_residual_(primal_residual) {}

    const std::vector<std::size_t>& violated_rows() const noexcept { return violated_rows_; }
    double primal_residual() const noexcept { return primal_residual_; }

private:
    std::vector<std::size_t> violated_rows_;
    double primal_residual_;
};

class NotConverged : public Error {
public:
    explicit NotConverged(const std::string& what) : Error(ErrorCategory::NonConvergence, what) {}
};

/// Process exit code for the CLI, one per category.
inline int exit_code(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::InvalidConfig:
        case ErrorCategory::InvalidArgument:
        case ErrorCategory::DimensionMismatch:
            return 2;
        case ErrorCategory::Infeasible:
            return 3;
        case ErrorCategory::NonConvergence:
            return 4;
        case ErrorCategory::Io:
            return 5;
    }
    return 1;
}

}  // namespace dsmpc
