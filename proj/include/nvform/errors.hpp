#pragma once

#include <stdexcept>
#include <string>

namespace nvform {

/// Invalid model parameters or inputs that violate an operation's preconditions.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed (no convergence, degenerate data, unresolvable result).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace nvform
