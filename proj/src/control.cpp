#include "krasov/control.hpp"

#include <cmath>
#include <sstream>

namespace krasov {

namespace {

// Relative disagreement tolerated between the two fallback potential paths.
constexpr double kPathAgreement = 1e-6;

}  // namespace

ControllerGains::ControllerGains(double k1, double kd, double ki) : k1_(k1), kd_(kd), ki_(ki) {
  if (!(k1 > 0.0)) throw std::invalid_argument("ControllerGains: k1 must be > 0");
  if (!(kd >= 0.0)) throw std::invalid_argument("ControllerGains: kd must be >= 0");
  if (!(ki > 0.0)) throw std::invalid_argument("ControllerGains: ki must be > 0");
}

ControllerGains ControllerGains::forced(double k1, double kd, double ki) {
  ControllerGains g;
  g.k1_ = k1;
  g.kd_ = kd;
  g.ki_ = ki;
  return g;
}

Vector xdot(const ControlAffineModel& model, const Vector& x, const Vector& u) {
  model.check_state(x);
  model.check_input(u);
  return model.drift(x) + model.input_matrix(x) * u;
}

Matrix alpha(const ControlAffineModel& model, const Vector& x, const Vector& xdot_val) {
  model.check_state(x);
  const Matrix g = model.input_matrix(x);
  Eigen::JacobiSVD<Matrix> svd(g);
  const auto& sv = svd.singularValues();
  const double smax = sv[0];
  const double smin = sv[sv.size() - 1];
  if (!(smax > 0.0) || !(smin > 0.0) || (smax / smin) * (smax / smin) > kMaxGramCondition) {
    std::ostringstream os;
    os << model.name() << ": g^T g is singular or ill-conditioned (cond > " << kMaxGramCondition
       << ")";
    throw SingularityError(os.str(), x);
  }
  const Matrix gdot = g_time_derivative(model, x, xdot_val);
  const Matrix gram = g.transpose() * g;
  return -gram.ldlt().solve(g.transpose() * gdot);
}

Vector beta(const ControlAffineModel& model, const Vector& x, const Vector& xdot_val) {
  return -output_y(model, x, xdot_val);
}

Vector output_y(const ControlAffineModel& model, const Vector& x, const Vector& xdot_val) {
  if (xdot_val.size() != model.state_dim()) {
    throw std::invalid_argument("output_y: velocity has wrong length");
  }
  return model.input_matrix(x).transpose() * (model.M() * xdot_val);
}

Vector u_dot(const ControlAffineModel& model, const Vector& x, const Vector& u, const Vector& vdot) {
  if (vdot.size() != model.input_dim()) throw std::invalid_argument("u_dot: vdot has wrong length");
  const Vector xd = xdot(model, x, u);
  return alpha(model, x, xd) * u + beta(model, x, xd) + vdot;
}

Vector line_integral(const ControlAffineModel& model, const std::vector<Vector>& waypoints,
                     int segments) {
  if (segments < 1) throw std::invalid_argument("line_integral: need at least one segment");
  if (waypoints.empty()) throw std::invalid_argument("line_integral: empty path");
  const Matrix& metric = model.M();
  Vector total = Vector::Zero(model.input_dim());
  for (std::size_t leg = 0; leg + 1 < waypoints.size(); ++leg) {
    const Vector& a = waypoints[leg];
    const Vector& b = waypoints[leg + 1];
    model.check_state(a);
    model.check_state(b);
    const Vector step = (b - a) / segments;
    Vector prev = (metric * model.input_matrix(a)).transpose() * step;
    for (int k = 1; k <= segments; ++k) {
      const Vector p = a + (static_cast<double>(k) / segments) * (b - a);
      const Vector cur = (metric * model.input_matrix(p)).transpose() * step;
      total += 0.5 * (prev + cur);
      prev = cur;
    }
  }
  return total;
}

Vector potential_via_path(const ControlAffineModel& model, const Vector& x, const Vector& x_ref,
                          int segments) {
  const Box& box = model.state_domain();
  if (!box.contains(x) || !box.contains(x_ref)) {
    throw std::invalid_argument("potential_via_path: endpoints must lie in the state domain");
  }
  return line_integral(model, {x_ref, x}, segments);
}

Vector potential_gamma(const ControlAffineModel& model, const Vector& x) {
  if (auto closed = model.closed_form_potential(x)) return *closed;
  const Vector ref = model.state_domain().center();
  const Vector straight = line_integral(model, {ref, x});
  // Staircase path: move one coordinate at a time.
  std::vector<Vector> stairs{ref};
  Vector corner = ref;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (corner[i] == x[i]) continue;
    corner[i] = x[i];
    stairs.push_back(corner);
  }
  if (stairs.size() == 1) stairs.push_back(x);
  const Vector dogleg = line_integral(model, stairs);
  const double scale = std::max(1.0, straight.cwiseAbs().maxCoeff());
  if ((straight - dogleg).cwiseAbs().maxCoeff() > kPathAgreement * scale) {
    throw IntegrabilityError(model.name() +
                             ": M g is not integrable (path-dependent line integral)");
  }
  return straight;
}

Vector solve_equilibrium_input(const ControlAffineModel& model, const Vector& x_star) {
  model.check_state(x_star);
  const Matrix g = model.input_matrix(x_star);
  const Vector f = model.drift(x_star);
  Eigen::ColPivHouseholderQR<Matrix> qr(g);
  qr.setThreshold(1e-12);
  if (qr.rank() < g.cols()) {
    throw SingularityError(model.name() + ": g(x*) is not full column rank", x_star);
  }
  const Vector u = qr.solve(-f);
  const double residual = (f + g * u).norm();
  if (!(residual < kEquilibriumTolerance)) {
    std::ostringstream os;
    os << model.name() << ": setpoint is not an equilibrium for any input (residual " << residual
       << ")";
    throw InfeasibleSetpointError(os.str(), residual);
  }
  return u;
}

Vector equilibrium_state_for_input(const ControlAffineModel& model, const Vector& u,
                                   const Vector& guess) {
  model.check_input(u);
  const int n = model.state_dim();
  Vector x = guess.size() ? guess : model.state_domain().center();
  model.check_state(x);
  for (int it = 0; it < 50; ++it) {
    const Vector r = model.drift(x) + model.input_matrix(x) * u;
    if (r.norm() < 1e-13 * (1.0 + x.norm())) return x;
    Matrix jac = model.drift_jacobian(x);
    for (int k = 0; k < n; ++k) {
      jac.col(k) += model.input_matrix_directional(x, Vector::Unit(n, k)) * u;
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(jac);
    if (qr.rank() < n) throw SingularityError(model.name() + ": singular Jacobian in equilibrium search", x);
    x -= qr.solve(r);
    require_finite(x, "equilibrium_state_for_input");
  }
  const double residual = (model.drift(x) + model.input_matrix(x) * u).norm();
  if (!(residual < kEquilibriumTolerance)) {
    throw InfeasibleSetpointError(model.name() + ": no equilibrium found for the given input", residual);
  }
  return x;
}

Setpoint make_setpoint(const ControlAffineModel& model, const Vector& x_star) {
  Setpoint sp;
  sp.x_star = x_star;
  sp.u_star = solve_equilibrium_input(model, x_star);
  sp.gamma_star = potential_gamma(model, x_star);
  return sp;
}

ControllerRealization::ControllerRealization(ControlAffineModel model, ControllerGains gains,
                                             Setpoint setpoint, Vector u0)
    : model_(std::move(model)), gains_(gains), setpoint_(std::move(setpoint)) {
  set_u(std::move(u0));
  model_.check_state(setpoint_.x_star);
  if (setpoint_.gamma_star.size() != model_.input_dim()) {
    throw std::invalid_argument("ControllerRealization: gamma_star has wrong length");
  }
}

void ControllerRealization::set_u(Vector u) {
  model_.check_input(u);
  u_ = std::move(u);
}

Vector ControllerRealization::stabilizing_vdot(const Vector& x, const Vector& xdot_val,
                                               const Vector& vbar_dot) const {
  if (vbar_dot.size() != model_.input_dim()) {
    throw std::invalid_argument("stabilizing_vdot: vbar_dot has wrong length");
  }
  const Vector y = output_y(model_, x, xdot_val);
  const Vector shaped = potential(x) - setpoint_.gamma_star;
  return (vbar_dot - gains_.kd() * y - gains_.ki() * shaped) / gains_.k1();
}

double ControllerRealization::closed_loop_storage(const Vector& x, const Vector& xdot_val) const {
  const Vector shaped = potential(x) - setpoint_.gamma_star;
  return 0.5 * gains_.k1() * xdot_val.dot(model_.M() * xdot_val) +
         0.5 * gains_.ki() * shaped.squaredNorm();
}

Vector stabilizing_vdot(const ControllerRealization& realization, const Vector& x,
                        const Vector& xdot_val, const Vector& vbar_dot) {
  return realization.stabilizing_vdot(x, xdot_val, vbar_dot);
}

}  // namespace krasov
