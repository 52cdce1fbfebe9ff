#pragma once

#include <stdexcept>
#include <string>

namespace dual {

/// Raised when an argument violates a documented precondition
/// (dimension mismatch, non-finite value, too few samples, ...).
class InvalidInput : public std::invalid_argument {
public:
    explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised when a numerical step cannot proceed, e.g. a null covariance
/// that is not positive definite after regularization.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidInput(message);
}

} // namespace detail
} // namespace dual
