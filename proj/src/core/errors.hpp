#pragma once

#include <stdexcept>
#include <string>

namespace ioncouple {

// Every failure raised by the library derives from Error so the C API can map
// it to a status code without string matching.
enum class ErrorKind {
    Argument,
    Config,
    Numerical,
    Undefined,
    Unsupported,
    Io,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string &what) : Error(ErrorKind::Argument, what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string &what) : Error(ErrorKind::Config, what) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string &what) : Error(ErrorKind::Numerical, what) {}
};

// Equilibrium search did not reach tolerance; residual is the final max-norm force.
struct SolverFailure : NumericalError {
    SolverFailure(const std::string &what, double residual)
        : NumericalError(what), residual(residual) {}
    double residual;
};

struct LinearityViolation : NumericalError {
    explicit LinearityViolation(const std::string &what) : NumericalError(what) {}
};

struct InstabilityError : NumericalError {
    InstabilityError(const std::string &what, char axis) : NumericalError(what), axis(axis) {}
    char axis;
};

struct UndefinedStatistics : Error {
    explicit UndefinedStatistics(const std::string &what) : Error(ErrorKind::Undefined, what) {}
};

struct UnsupportedError : Error {
    explicit UnsupportedError(const std::string &what) : Error(ErrorKind::Unsupported, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string &what) : Error(ErrorKind::Io, what) {}
};

}  // namespace ioncouple
