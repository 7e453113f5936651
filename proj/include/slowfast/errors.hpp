#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace slowfast {

// Every error carries a short machine-readable kind and the CLI exit code it maps to.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
    virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "config"; }
    int exit_code() const noexcept override { return 2; }
};

/// Explicit step too large for the fast time scale.
class StiffnessError : public ConfigError {
public:
    StiffnessError(const std::string& what, double suggested_dt)
        : ConfigError(what), suggested_dt_(suggested_dt) {}
    const char* kind() const noexcept override { return "stiffness"; }
    double suggested_dt() const noexcept { return suggested_dt_; }

private:
    double suggested_dt_;
};

class DomainError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "domain"; }
    int exit_code() const noexcept override { return 2; }
};

/// A structural hypothesis on the linear parts (spectral split) does not hold.
class HypothesisError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "hypothesis"; }
    int exit_code() const noexcept override { return 2; }
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : Error(what), step_(step) {}
    const char* kind() const noexcept override { return "divergence"; }
    int exit_code() const noexcept override { return 3; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "convergence"; }
    int exit_code() const noexcept override { return 4; }
};

}  // namespace slowfast
