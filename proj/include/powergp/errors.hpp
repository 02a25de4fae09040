#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace powergp {

/// Base class for all library errors. Carries the originating module and an
/// error kind so callers (notably the CLI) can emit machine-readable reports.
class Error : public std::runtime_error {
public:
    Error(std::string module, std::string kind, const std::string& message)
        : std::runtime_error(message), module_(std::move(module)), kind_(std::move(kind)) {}

    const std::string& module() const noexcept { return module_; }
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string module_;
    std::string kind_;
};

/// Invalid argument or configuration value.
class ValidationError : public Error {
public:
    ValidationError(std::string module, const std::string& message)
        : Error(std::move(module), "validation", message) {}
};

/// Observation outside the likelihood's support. May itemize offending indices.
class SupportError : public Error {
public:
    SupportError(std::string module, const std::string& message, std::vector<long> indices = {})
        : Error(std::move(module), "support", message), indices_(std::move(indices)) {}

    const std::vector<long>& indices() const noexcept { return indices_; }

private:
    std::vector<long> indices_;
};

/// Numerical failure (e.g. Cholesky not positive definite after jitter
/// escalation). Records the jitter levels that were attempted.
class NumericalError : public Error {
public:
    NumericalError(std::string module, const std::string& message,
                   std::vector<double> jitter_levels = {})
        : Error(std::move(module), "numerical", message),
          jitter_levels_(std::move(jitter_levels)) {}

    const std::vector<double>& jitter_levels() const noexcept { return jitter_levels_; }

private:
    std::vector<double> jitter_levels_;
};

/// File ingestion failure with row context (-1 when not row-specific).
class IngestionError : public Error {
public:
    IngestionError(std::string module, const std::string& message, long row = -1)
        : Error(std::move(module), "ingestion", message), row_(row) {}

    long row() const noexcept { return row_; }

private:
    long row_;
};

/// Operation invoked on a model in the wrong state.
class StateError : public Error {
public:
    StateError(std::string module, const std::string& message)
        : Error(std::move(module), "state", message) {}
};

/// Too few records survive cleaning to proceed.
class InsufficientDataError : public Error {
public:
    InsufficientDataError(std::string module, const std::string& message)
        : Error(std::move(module), "insufficient-data", message) {}
};

/// Metric undefined because the targets have zero variance.
class DegenerateVarianceError : public Error {
public:
    DegenerateVarianceError(std::string module, const std::string& message)
        : Error(std::move(module), "degenerate-variance", message) {}
};

}  // namespace powergp
