#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "krasov/errors.hpp"

namespace krasov {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Default central-difference step, applied per coordinate as h * max(1, |x_i|).
inline constexpr double kDefaultFdStep = 1e-5;

/// Throws EvaluationError naming the first non-finite entry.
void require_finite(const Vector& v, const std::string& what);
void require_finite(const Matrix& m, const std::string& what);

/// Axis-aligned box [lower, upper] in R^n.
struct Box {
  Vector lower;
  Vector upper;

  Box() = default;
  Box(Vector lo, Vector hi);

  int dim() const { return static_cast<int>(lower.size()); }
  Vector center() const { return 0.5 * (lower + upper); }
  bool contains(const Vector& x, double margin = 0.0) const;

  /// Deterministic uniform samples; identical for identical (count, seed).
  std::vector<Vector> sample(int count, std::uint64_t seed) const;
};

/// Constant symmetric positive definite contraction metric.
class Metric {
 public:
  /// Rejects non-square, asymmetric (1e-12 relative) or non-positive-definite input.
  explicit Metric(Matrix m);

  const Matrix& matrix() const { return m_; }
  int dim() const { return static_cast<int>(m_.rows()); }
  double min_eigenvalue() const { return min_eig_; }

 private:
  Matrix m_;
  double min_eig_ = 0.0;
};

using DriftFn = std::function<Vector(const Vector&)>;
using InputMatrixFn = std::function<Matrix(const Vector&)>;
using JacobianFn = std::function<Matrix(const Vector&)>;
/// (x, w) -> (dg/dx . w), an n x m matrix.
using DirectionalFn = std::function<Matrix(const Vector&, const Vector&)>;
/// x -> Gamma(x) in R^m with grad Gamma_j = column j of M g.
using PotentialFn = std::function<Vector(const Vector&)>;

/// Everything needed to build a ControlAffineModel. Optional callables may be
/// left empty; finite differences take over.
struct ModelDefinition {
  std::string name;
  int n = 0;
  int m = 0;
  DriftFn drift;
  InputMatrixFn input_matrix;
  JacobianFn drift_jacobian;
  DirectionalFn input_matrix_directional;
  PotentialFn potential;
  Matrix metric;
  Box state_domain;
};

/// xdot = f(x) + g(x) u with a constant contraction metric.
///
/// Immutable after construction. The callables must be pure so that a model
/// can be evaluated from several threads at once.
class ControlAffineModel {
 public:
  explicit ControlAffineModel(ModelDefinition def);

  const std::string& name() const { return name_; }
  int state_dim() const { return n_; }
  int input_dim() const { return m_; }
  const Metric& metric() const { return metric_; }
  const Matrix& M() const { return metric_.matrix(); }
  const Box& state_domain() const { return domain_; }

  bool has_drift_jacobian() const { return static_cast<bool>(drift_jacobian_); }
  bool has_input_matrix_directional() const {
    return static_cast<bool>(input_matrix_directional_);
  }
  bool has_potential() const { return static_cast<bool>(potential_); }

  /// f(x); throws EvaluationError on non-finite output.
  Vector drift(const Vector& x) const;
  /// g(x), n x m; throws EvaluationError on non-finite output.
  Matrix input_matrix(const Vector& x) const;

  /// Analytic df/dx when registered, central differences otherwise.
  Matrix drift_jacobian(const Vector& x) const;
  /// Analytic (dg/dx . w) when registered, central differences otherwise.
  Matrix input_matrix_directional(const Vector& x, const Vector& w) const;
  /// Closed-form potential, if the model registered one.
  std::optional<Vector> closed_form_potential(const Vector& x) const;

  void check_state(const Vector& x) const;
  void check_input(const Vector& u) const;

 private:
  std::string name_;
  int n_;
  int m_;
  DriftFn drift_;
  InputMatrixFn input_matrix_;
  JacobianFn drift_jacobian_;
  DirectionalFn input_matrix_directional_;
  PotentialFn potential_;
  Metric metric_;
  Box domain_;
};

/// Central-difference df/dx. Caller keeps x inside the domain by at least the step.
Matrix numeric_drift_jacobian(const ControlAffineModel& model, const Vector& x,
                              double h = kDefaultFdStep);

/// Central-difference (dg/dx . w) computed along the unit direction w/|w|.
Matrix numeric_input_matrix_directional(const ControlAffineModel& model, const Vector& x,
                                        const Vector& w, double h = kDefaultFdStep);

/// d/dt g(x(t)) along velocity xdot, i.e. (dg/dx) . xdot.
Matrix g_time_derivative(const ControlAffineModel& model, const Vector& x, const Vector& xdot);

}  // namespace krasov
