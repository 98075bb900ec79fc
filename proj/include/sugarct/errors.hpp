#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace sugarct {

/// Raised when a caller violates an operation's preconditions.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised by iterative solvers when iterates stop being finite or blow up.
/// Carries the objective history recorded before the failure.
class NumericalFailure : public std::runtime_error {
public:
    NumericalFailure(const std::string& what, std::vector<double> objective_history)
        : std::runtime_error(what), history_(std::move(objective_history)) {}

    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

/// Raised when training produces a non-finite loss.
class TrainingFailure : public std::runtime_error {
public:
    TrainingFailure(const std::string& what, std::vector<double> loss_history)
        : std::runtime_error(what), history_(std::move(loss_history)) {}

    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

/// Raised on malformed image, sinogram or parameter files.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const std::string& message)
{
    if (!condition) throw InvalidArgument(message);
}

} // namespace detail
} // namespace sugarct
