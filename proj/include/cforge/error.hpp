#pragma once
// Exception types shared by every module. The CLI maps them onto exit codes.

#include <stdexcept>
#include <string>

namespace cforge {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of the operation.
class DomainError : public Error { using Error::Error; };
/// A documented precondition of the operation does not hold.
class PreconditionError : public Error { using Error::Error; };
/// A numeric parameter is out of its admissible range.
class ParameterError : public Error { using Error::Error; };
/// An equation has no solution in the requested range.
class NoSolutionError : public Error { using Error::Error; };
/// An iteration failed to converge within its cap.
class ConvergenceError : public Error { using Error::Error; };
/// A numeric method could not reach the requested accuracy.
class AccuracyError : public Error {
public:
    AccuracyError(const std::string& what, double achieved)
        : Error(what), achieved_(achieved) {}
    double achieved() const noexcept { return achieved_; }
private:
    double achieved_;
};
/// Polygon data is malformed (self-intersecting, not rectilinear, ...).
class GeometryError : public Error { using Error::Error; };
/// A sampled certificate condition failed.
class CertificateError : public Error { using Error::Error; };
/// A construction step failed; `step()` names it (e.g. "step_I4").
class ConstructionError : public Error {
public:
    ConstructionError(std::string step, const std::string& what)
        : Error(step + ": " + what), step_(std::move(step)) {}
    const std::string& step() const noexcept { return step_; }
private:
    std::string step_;
};
/// The map is not of disjoint type on the sampled region (expansion <= 1).
class NotDisjointTypeError : public Error { using Error::Error; };
/// Malformed user input (config files, JSON).
class InputError : public Error { using Error::Error; };

} // namespace cforge
