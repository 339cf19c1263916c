#pragma once

#include <stdexcept>
#include <string>

namespace tqflow {

/// Malformed model parameters or configuration input.
class InvalidParameter : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An engine was asked to run outside the regime where it is defined
/// (no stationary law, state outside the moment domain, oversized oracle, ...).
class PreconditionError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Numerical failure: step-size underflow, step probabilities above one.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tqflow
