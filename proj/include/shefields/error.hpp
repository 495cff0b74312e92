#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shefields {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid grid, config or parameter combination.
class ConfigError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class NumericalBlowUp : public Error {
public:
    NumericalBlowUp(std::size_t step, const std::string& what)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class ResourceError : public Error {
public:
    ResourceError(std::size_t required_bytes, const std::string& what)
        : Error(what + " (requires " + std::to_string(required_bytes) + " bytes)"),
          required_bytes_(required_bytes) {}
    std::size_t required_bytes() const noexcept { return required_bytes_; }

private:
    std::size_t required_bytes_;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class DegenerateEnsembleError : public Error {
public:
    using Error::Error;
};

class QuantileResolutionError : public Error {
public:
    using Error::Error;
};

// A nonpositive value where the comparison principle guarantees positivity.
class PositivityViolation : public Error {
public:
    using Error::Error;
};

}  // namespace shefields
