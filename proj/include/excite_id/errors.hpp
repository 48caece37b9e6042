#pragma once

#include <stdexcept>
#include <string>

namespace excite {

// Violated precondition or malformed input. The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A numerical procedure could not deliver a trustworthy result. Exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when the regression matrix V lacks full row rank.
class InsufficientExcitation : public NumericalError {
public:
    InsufficientExcitation(const std::string& what, double sigma_min)
        : NumericalError(what + " (sigma_min(V) = " + std::to_string(sigma_min) + ")"),
          sigma_min_(sigma_min) {}

    [[nodiscard]] double sigma_min() const noexcept { return sigma_min_; }

private:
    double sigma_min_;
};

}  // namespace excite
