#pragma once

#include <stdexcept>
#include <string>

namespace mnlrl {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dimension mismatch, out-of-range parameter, malformed input.
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error("invalid argument: " + what) {}
};

/// A state/action pair that cannot be used (e.g. no reachable successors).
class InvalidState : public Error {
public:
    explicit InvalidState(const std::string& what) : Error("invalid state: " + what) {}
};

/// An observed next state outside the reachable set.
class InvalidObservation : public Error {
public:
    explicit InvalidObservation(const std::string& what) : Error("invalid observation: " + what) {}
};

/// Factorization, bisection or Newton solver did not succeed.
class NumericalFailure : public Error {
public:
    explicit NumericalFailure(const std::string& what) : Error("numerical failure: " + what) {}
};

/// A tabular kernel that has no exact MNL representation.
class InvalidKernel : public Error {
public:
    explicit InvalidKernel(const std::string& what) : Error("invalid kernel: " + what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io error: " + what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

}  // namespace mnlrl
