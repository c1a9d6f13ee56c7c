#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace singflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

/// Base class for all errors raised by the library. Every failure mode that a
/// caller can react to gets its own subclass; plain std::runtime_error never
/// escapes from library code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the declared domain of an operation (point outside the field
/// domain, fiber vector too long, bad configuration value, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The orbit left the ball of radius domain_radius before the requested time.
class EscapeError : public Error {
 public:
  EscapeError(const std::string& what, double exit_time_)
      : Error(what), exit_time(exit_time_) {}
  double exit_time;
};

/// Step size underflow: the integrator cannot satisfy the tolerances.
class StiffnessError : public Error {
 public:
  StiffnessError(const std::string& what, double time_)
      : Error(what), time(time_) {}
  double time;
};

/// The orbit entered a neighborhood where ||X|| is below the singular
/// threshold; section-based operations are not defined there and the caller
/// should switch to the blowup coordinates.
class NearSingularityError : public Error {
 public:
  NearSingularityError(const std::string& what, double time_)
      : Error(what), time(time_) {}
  double time;
};

/// No section crossing inside the search window.
class NoCrossingError : public Error {
 public:
  using Error::Error;
};

/// More than one section crossing inside the search window.
class AmbiguousCrossingError : public Error {
 public:
  using Error::Error;
};

/// A holonomy orbit left the flow tube before reaching the target section.
class TubeEscapeError : public Error {
 public:
  TubeEscapeError(const std::string& what, double escape_time_)
      : Error(what), escape_time(escape_time_) {}
  double escape_time;
};

/// No orbit return was found within the search horizon.
class NoReturnError : public Error {
 public:
  using Error::Error;
};

/// The section return iterates failed to contract toward a fixed point.
class NoContractionError : public Error {
 public:
  using Error::Error;
};

/// An iterative solve (Newton, bisection polish) stalled; carries the best
/// residual reached so the caller can report how close it got.
class RootFindError : public Error {
 public:
  RootFindError(const std::string& what, double residual_)
      : Error(what), residual(residual_) {}
  double residual;
};

/// A declared singularity has a (numerically) non invertible linearization.
class DegenerateSingularityError : public Error {
 public:
  using Error::Error;
};

/// The point coincides with a singularity, so its blowup image is a whole
/// projective fiber; the caller must supply a direction tag.
class NeedsDirectionError : public Error {
 public:
  using Error::Error;
};

/// An identification map was requested outside its validity region.
class IdentificationDomainError : public Error {
 public:
  using Error::Error;
};

inline double sq(double x) { return x * x; }

}  // namespace singflow
