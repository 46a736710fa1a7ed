#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace krasov {

/// Base class for every failure raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model callable produced a non-finite value.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, int coordinate)
      : Error(what), coordinate_(coordinate) {}

  /// Index of the first offending output entry, or -1 when unknown.
  int coordinate() const { return coordinate_; }

 private:
  int coordinate_;
};

/// Input matrix (or g^T g) is numerically rank deficient at the given state.
class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, Eigen::VectorXd at)
      : Error(what), at_(std::move(at)) {}

  const Eigen::VectorXd& at() const { return at_; }

 private:
  Eigen::VectorXd at_;
};

/// No input makes the requested state an equilibrium.
class InfeasibleSetpointError : public Error {
 public:
  InfeasibleSetpointError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}

  double residual() const { return residual_; }

 private:
  double residual_;
};

/// M g is not a gradient field: path integrals disagree.
class IntegrabilityError : public Error {
 public:
  using Error::Error;
};

/// Integrator produced a non-finite stage.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double t) : Error(what), t_(t) {}

  double time() const { return t_; }

 private:
  double t_;
};

/// Assumptions A1-A3 failed and the caller did not waive them.
class AssumptionError : public Error {
 public:
  using Error::Error;
};

}  // namespace krasov
