#pragma once

#include <stdexcept>
#include <string>

namespace voltguard {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed network, scenario, or configuration input.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Vector or matrix shapes that do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or a solver that failed to converge.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// The operating point has no pre-fault equilibrium.
class InfeasibleScenario : public Error {
public:
    using Error::Error;
};

/// Even shedding every device fully does not stabilise the scenario.
class NoFeasibleAction : public Error {
public:
    using Error::Error;
};

/// Scenario sampling ran out of its rejection budget.
class SamplingError : public Error {
public:
    using Error::Error;
};

}  // namespace voltguard
