#pragma once

#include <stdexcept>
#include <string>

namespace embedhom {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A coefficient is not symmetric, not positive definite, or leaves [alpha, beta].
class InvalidCoefficientError : public Error {
public:
    using Error::Error;
};

/// Inclusion geometry that cannot guarantee disjoint balls.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Mesh would exceed the configured vertex cap.
class MemoryGuardError : public Error {
public:
    using Error::Error;
};

/// Conjugate gradients hit its iteration cap.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual, int iterations)
        : Error(what), residual_(residual), iterations_(iterations)
    {
    }

    [[nodiscard]] double residual() const noexcept { return residual_; }
    [[nodiscard]] int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

/// The scalar self-consistent equation is not bracketed by [alpha, beta].
class BracketError : public Error {
public:
    using Error::Error;
};

/// Invalid experiment configuration; line is 1-based, 0 when unknown.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line)
    {
    }

    [[nodiscard]] int line() const noexcept { return line_; }

private:
    int line_;
};

} // namespace embedhom
