#include "krasov/system.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace krasov {

namespace {

double scaled_step(double h, double xi) { return h * std::max(1.0, std::abs(xi)); }

}  // namespace

void require_finite(const Vector& v, const std::string& what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream os;
      os << what << ": non-finite value at index " << i;
      throw EvaluationError(os.str(), static_cast<int>(i));
    }
  }
}

void require_finite(const Matrix& m, const std::string& what) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!std::isfinite(m(i, j))) {
        std::ostringstream os;
        os << what << ": non-finite value at (" << i << ", " << j << ")";
        throw EvaluationError(os.str(), static_cast<int>(i));
      }
    }
  }
}

Box::Box(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw std::invalid_argument("Box: bounds must be non-empty and of equal length");
  }
  if ((upper.array() < lower.array()).any()) {
    throw std::invalid_argument("Box: upper bound below lower bound");
  }
}

bool Box::contains(const Vector& x, double margin) const {
  if (x.size() != lower.size()) return false;
  return ((x.array() - lower.array()) >= margin).all() &&
         ((upper.array() - x.array()) >= margin).all();
}

std::vector<Vector> Box::sample(int count, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int k = 0; k < count; ++k) {
    Vector x(lower.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x[i] = lower[i] + (upper[i] - lower[i]) * unit(rng);
    }
    out.push_back(std::move(x));
  }
  return out;
}

Metric::Metric(Matrix m) : m_(std::move(m)) {
  if (m_.rows() == 0 || m_.rows() != m_.cols()) {
    throw std::invalid_argument("Metric: matrix must be square and non-empty");
  }
  const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
  if ((m_ - m_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("Metric: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m_, Eigen::EigenvaluesOnly);
  min_eig_ = eig.eigenvalues().minCoeff();
  if (!(min_eig_ > 0.0)) {
    throw std::invalid_argument("Metric: matrix is not positive definite");
  }
}

ControlAffineModel::ControlAffineModel(ModelDefinition def)
    : name_(std::move(def.name)),
      n_(def.n),
      m_(def.m),
      drift_(std::move(def.drift)),
      input_matrix_(std::move(def.input_matrix)),
      drift_jacobian_(std::move(def.drift_jacobian)),
      input_matrix_directional_(std::move(def.input_matrix_directional)),
      potential_(std::move(def.potential)),
      metric_(std::move(def.metric)),
      domain_(std::move(def.state_domain)) {
  if (n_ < 1) throw std::invalid_argument("ControlAffineModel: n must be >= 1");
  if (m_ < 1 || m_ >= n_) throw std::invalid_argument("ControlAffineModel: need 1 <= m < n");
  if (!drift_ || !input_matrix_) {
    throw std::invalid_argument("ControlAffineModel: drift and input matrix are required");
  }
  if (metric_.dim() != n_) throw std::invalid_argument("ControlAffineModel: metric is not n x n");
  if (domain_.dim() != n_) throw std::invalid_argument("ControlAffineModel: domain is not n-dim");
}

void ControlAffineModel::check_state(const Vector& x) const {
  if (x.size() != n_) {
    throw std::invalid_argument(name_ + ": state has length " + std::to_string(x.size()) +
                                ", expected " + std::to_string(n_));
  }
  require_finite(x, name_ + ": state");
}

void ControlAffineModel::check_input(const Vector& u) const {
  if (u.size() != m_) {
    throw std::invalid_argument(name_ + ": input has length " + std::to_string(u.size()) +
                                ", expected " + std::to_string(m_));
  }
  require_finite(u, name_ + ": input");
}

Vector ControlAffineModel::drift(const Vector& x) const {
  Vector f = drift_(x);
  if (f.size() != n_) throw std::logic_error(name_ + ": drift returned wrong length");
  require_finite(f, name_ + ": drift");
  return f;
}

Matrix ControlAffineModel::input_matrix(const Vector& x) const {
  Matrix g = input_matrix_(x);
  if (g.rows() != n_ || g.cols() != m_) {
    throw std::logic_error(name_ + ": input matrix has wrong shape");
  }
  require_finite(g, name_ + ": input matrix");
  return g;
}

Matrix ControlAffineModel::drift_jacobian(const Vector& x) const {
  if (!drift_jacobian_) return numeric_drift_jacobian(*this, x);
  Matrix j = drift_jacobian_(x);
  require_finite(j, name_ + ": drift jacobian");
  return j;
}

Matrix ControlAffineModel::input_matrix_directional(const Vector& x, const Vector& w) const {
  if (!input_matrix_directional_) return numeric_input_matrix_directional(*this, x, w);
  Matrix d = input_matrix_directional_(x, w);
  require_finite(d, name_ + ": input matrix derivative");
  return d;
}

std::optional<Vector> ControlAffineModel::closed_form_potential(const Vector& x) const {
  if (!potential_) return std::nullopt;
  Vector p = potential_(x);
  require_finite(p, name_ + ": potential");
  return p;
}

Matrix numeric_drift_jacobian(const ControlAffineModel& model, const Vector& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("numeric_drift_jacobian: step must be positive");
  model.check_state(x);
  const int n = model.state_dim();
  Matrix jac(n, n);
  Vector probe = x;
  for (int i = 0; i < n; ++i) {
    const double hi = scaled_step(h, x[i]);
    Vector fp, fm;
    try {
      probe[i] = x[i] + hi;
      fp = model.drift(probe);
      probe[i] = x[i] - hi;
      fm = model.drift(probe);
    } catch (const EvaluationError& e) {
      std::ostringstream os;
      os << "numeric_drift_jacobian: perturbing coordinate " << i << ": " << e.what();
      throw EvaluationError(os.str(), i);
    }
    probe[i] = x[i];
    jac.col(i) = (fp - fm) / (2.0 * hi);
  }
  return jac;
}

Matrix numeric_input_matrix_directional(const ControlAffineModel& model, const Vector& x,
                                        const Vector& w, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("numeric directional derivative: step must be positive");
  model.check_state(x);
  const double norm = w.norm();
  if (norm == 0.0) return Matrix::Zero(model.state_dim(), model.input_dim());
  const Vector dir = w / norm;
  const double hs = scaled_step(h, x.cwiseAbs().maxCoeff());
  const Matrix gp = model.input_matrix(x + hs * dir);
  const Matrix gm = model.input_matrix(x - hs * dir);
  Matrix d = (gp - gm) * (norm / (2.0 * hs));
  require_finite(d, model.name() + ": input matrix derivative");
  return d;
}

Matrix g_time_derivative(const ControlAffineModel& model, const Vector& x, const Vector& xdot) {
  model.check_state(x);
  if (xdot.size() != model.state_dim()) {
    throw std::invalid_argument("g_time_derivative: velocity has wrong length");
  }
  return model.input_matrix_directional(x, xdot);
}

}  // namespace krasov
