#pragma once

#include <stdexcept>
#include <string>

namespace rdm {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// bad model parameters (v, p_plus, T, ...)
struct ParameterError : Error {
    using Error::Error;
};

// size mismatch, malformed structure
struct StructuralError : Error {
    using Error::Error;
};

// site or index outside the box
struct RangeError : Error {
    using Error::Error;
};

// argument outside the mathematical domain of a function
struct DomainError : Error {
    using Error::Error;
};

// convergence failures, out-of-range occupations
struct NumericalError : Error {
    using Error::Error;
};

// caller broke a documented precondition that cannot be checked cheaply up front
struct ContractError : Error {
    using Error::Error;
};

struct DegenerateRegionError : Error {
    using Error::Error;
};

struct FitError : Error {
    using Error::Error;
};

struct PlanError : Error {
    using Error::Error;
};

}  // namespace rdm
