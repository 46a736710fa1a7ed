#include "krasov/models.hpp"

#include <cmath>

namespace krasov::models {

void HvacTwoZoneParams::validate() const {
  for (double c : {C1, C2, C3, C4}) {
    if (!(c > 0.0)) throw std::invalid_argument("hvac: capacitances must be > 0");
  }
  for (double r : {R31, R42, R34, R10, R20}) {
    if (!(r > 0.0)) throw std::invalid_argument("hvac: resistances must be > 0");
  }
  if (!(cp > 0.0)) throw std::invalid_argument("hvac: cp must be > 0");
  if (!std::isfinite(Ts) || !std::isfinite(Tinf)) {
    throw std::invalid_argument("hvac: temperatures must be finite");
  }
  if (!(domain_lower < domain_upper)) throw std::invalid_argument("hvac: empty domain");
  if (Ts >= domain_lower && Ts <= domain_upper) {
    throw std::invalid_argument("hvac: Ts must lie outside the zone temperature domain");
  }
}

Matrix hvac_conductance(const HvacTwoZoneParams& p) {
  const double g31 = 1.0 / p.R31;
  const double g42 = 1.0 / p.R42;
  const double g34 = 1.0 / p.R34;
  Matrix l(4, 4);
  // clang-format off
  l << g31 + 1.0 / p.R10, 0.0,               -g31,        0.0,
       0.0,               g42 + 1.0 / p.R20, 0.0,         -g42,
       -g31,              0.0,               g31 + g34,   -g34,
       0.0,               -g42,              -g34,        g42 + g34;
  // clang-format on
  return l;
}

ControlAffineModel hvac_model(const HvacTwoZoneParams& params) {
  params.validate();
  const HvacTwoZoneParams p = params;
  const Vector cap = (Vector(4) << p.C1, p.C2, p.C3, p.C4).finished();
  const Matrix drift_matrix = -(cap.cwiseInverse().asDiagonal() * hvac_conductance(p));
  const Vector offset =
      (Vector(4) << p.Tinf / (p.R10 * p.C1), p.Tinf / (p.R20 * p.C2), 0.0, 0.0).finished();

  ModelDefinition def;
  def.name = "hvac2z";
  def.n = 4;
  def.m = 2;
  def.drift = [drift_matrix, offset](const Vector& x) -> Vector {
    return drift_matrix * x + offset;
  };
  def.drift_jacobian = [drift_matrix](const Vector&) -> Matrix { return drift_matrix; };
  def.input_matrix = [p](const Vector& x) -> Matrix {
    Matrix g = Matrix::Zero(4, 2);
    g(0, 0) = p.cp / p.C1 * (p.Ts - x[0]);
    g(1, 1) = p.cp / p.C2 * (p.Ts - x[1]);
    return g;
  };
  def.input_matrix_directional = [p](const Vector&, const Vector& w) -> Matrix {
    Matrix d = Matrix::Zero(4, 2);
    d(0, 0) = -p.cp / p.C1 * w[0];
    d(1, 1) = -p.cp / p.C2 * w[1];
    return d;
  };
  def.potential = [p](const Vector& x) -> Vector {
    const double d1 = x[0] - p.Ts;
    const double d2 = x[1] - p.Ts;
    return (Vector(2) << -0.5 * p.cp * d1 * d1, -0.5 * p.cp * d2 * d2).finished();
  };
  def.metric = Matrix(cap.asDiagonal());
  def.state_domain = Box(Vector::Constant(4, p.domain_lower), Vector::Constant(4, p.domain_upper));
  return ControlAffineModel(std::move(def));
}

Vector hvac_equilibrium_state(const HvacTwoZoneParams& p, double t1_star, double t2_star) {
  const double g31 = 1.0 / p.R31;
  const double g42 = 1.0 / p.R42;
  const double g34 = 1.0 / p.R34;
  Eigen::Matrix2d wall;
  wall << g31 + g34, -g34, -g34, g42 + g34;
  const Eigen::Vector2d rhs(g31 * t1_star, g42 * t2_star);
  const Eigen::Vector2d walls = wall.partialPivLu().solve(rhs);
  return (Vector(4) << t1_star, t2_star, walls[0], walls[1]).finished();
}

HvacScenario hvac_default_scenario() {
  HvacTwoZoneParams params;
  ControlAffineModel model = hvac_model(params);
  SimulationConfig config;
  config.t_end = 40.0;
  config.dt = 1e-3;
  config.log_stride = 10;
  config.x0 = Vector::Constant(4, params.Tinf);
  config.u0 = Vector::Zero(2);
  config.gains = ControllerGains(1.0, 1.0, 1.0);
  config.x_star = hvac_equilibrium_state(params, 2.5, 6.0);
  return HvacScenario{params, std::move(model), std::move(config)};
}

nlohmann::json to_json(const HvacTwoZoneParams& p) {
  return {{"C1", p.C1},   {"C2", p.C2},   {"C3", p.C3},   {"C4", p.C4},
          {"R31", p.R31}, {"R42", p.R42}, {"R34", p.R34}, {"R10", p.R10},
          {"R20", p.R20}, {"cp", p.cp},   {"Ts", p.Ts},   {"Tinf", p.Tinf},
          {"domain_lower", p.domain_lower}, {"domain_upper", p.domain_upper}};
}

ScalarPotential quadratic_potential(const Matrix& q) {
  return ScalarPotential{
      [q](const Vector& z) { return 0.5 * z.dot(q * z); },
      [q](const Vector& z) -> Vector { return q * z; },
      [q](const Vector&) -> Matrix { return q; },
  };
}

namespace {

void require_spd(const Matrix& a, const char* what) {
  if (a.rows() == 0 || a.rows() != a.cols()) {
    throw std::invalid_argument(std::string("rlc: ") + what + " must be square");
  }
  Eigen::LLT<Matrix> llt(0.5 * (a + a.transpose()));
  if (llt.info() != Eigen::Success || (a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument(std::string("rlc: ") + what + " must be symmetric positive definite");
  }
}

}  // namespace

void RlcParams::validate() const {
  require_spd(L, "L");
  require_spd(C, "C");
  if (interconnection.rows() != L.rows() || interconnection.cols() != C.rows()) {
    throw std::invalid_argument("rlc: interconnection must be n_L x n_C");
  }
  if (Bs.rows() != L.rows() || Bs.cols() < 1) throw std::invalid_argument("rlc: Bs must be n_L x m");
  if (Bs.cols() >= L.rows() + C.rows()) throw std::invalid_argument("rlc: need m < n_L + n_C");
  for (const auto* pot : {&current_potential, &voltage_potential}) {
    if (!pot->value || !pot->gradient || !pot->hessian) {
      throw std::invalid_argument("rlc: potentials need value, gradient and hessian");
    }
  }
  if (domain.dim() != L.rows() + C.rows()) throw std::invalid_argument("rlc: domain has wrong dim");
}

RlcSystem rlc_model(RlcParams params) {
  params.validate();
  const int nl = params.n_l();
  const int nc = params.n_c();
  const int n = nl + nc;
  const int m = static_cast<int>(params.Bs.cols());
  const Matrix l_inv = params.L.inverse();
  const Matrix c_inv = params.C.inverse();
  const Matrix gamma = params.interconnection;
  const ScalarPotential gpot = params.current_potential;
  const ScalarPotential jpot = params.voltage_potential;

  ModelDefinition def;
  def.name = "rlc";
  def.n = n;
  def.m = m;
  def.drift = [=](const Vector& x) -> Vector {
    const Vector i = x.head(nl);
    const Vector v = x.tail(nc);
    Vector f(n);
    f.head(nl) = -l_inv * (gamma * v + gpot.gradient(i));
    f.tail(nc) = c_inv * (gamma.transpose() * i - jpot.gradient(v));
    return f;
  };
  def.drift_jacobian = [=](const Vector& x) -> Matrix {
    Matrix j(n, n);
    j.topLeftCorner(nl, nl) = -l_inv * gpot.hessian(x.head(nl));
    j.topRightCorner(nl, nc) = -l_inv * gamma;
    j.bottomLeftCorner(nc, nl) = c_inv * gamma.transpose();
    j.bottomRightCorner(nc, nc) = -c_inv * jpot.hessian(x.tail(nc));
    return j;
  };
  Matrix g = Matrix::Zero(n, m);
  g.topRows(nl) = l_inv * params.Bs;
  def.input_matrix = [g](const Vector&) -> Matrix { return g; };
  def.input_matrix_directional = [n, m](const Vector&, const Vector&) -> Matrix {
    return Matrix::Zero(n, m);
  };
  const Matrix bs = params.Bs;
  def.potential = [bs, nl](const Vector& x) -> Vector { return bs.transpose() * x.head(nl); };
  Matrix metric = Matrix::Zero(n, n);
  metric.topLeftCorner(nl, nl) = params.L;
  metric.bottomRightCorner(nc, nc) = params.C;
  def.metric = metric;
  def.state_domain = params.domain;
  ControlAffineModel model(std::move(def));
  return RlcSystem{std::move(params), std::move(model)};
}

double RlcSystem::mixed_potential(const Vector& x) const {
  const Vector i = x.head(params.n_l());
  const Vector v = x.tail(params.n_c());
  return i.dot(params.interconnection * v) + params.current_potential.value(i) -
         params.voltage_potential.value(v);
}

Vector RlcSystem::mixed_potential_gradient(const Vector& x) const {
  const Vector i = x.head(params.n_l());
  const Vector v = x.tail(params.n_c());
  Vector grad(x.size());
  grad.head(params.n_l()) = params.interconnection * v + params.current_potential.gradient(i);
  grad.tail(params.n_c()) =
      params.interconnection.transpose() * i - params.voltage_potential.gradient(v);
  return grad;
}

Vector RlcSystem::rates(const Vector& x, const Vector& vs) const {
  const Vector grad = mixed_potential_gradient(x);
  Vector r(x.size());
  r.head(params.n_l()) = -params.L.ldlt().solve(grad.head(params.n_l()) - params.Bs * vs);
  r.tail(params.n_c()) = params.C.ldlt().solve(grad.tail(params.n_c()));
  return r;
}

double RlcSystem::storage(const Vector& x, const Vector& vs) const {
  const Vector r = rates(x, vs);
  const Vector it = r.head(params.n_l());
  const Vector vt = r.tail(params.n_c());
  return 0.5 * it.dot(params.L * it) + 0.5 * vt.dot(params.C * vt);
}

RlcSystem rlc_series(const RlcSeriesParams& p) {
  RlcParams params;
  params.L = Matrix::Constant(1, 1, p.L);
  params.C = Matrix::Constant(1, 1, p.C);
  params.interconnection = Matrix::Constant(1, 1, 1.0);
  params.current_potential = quadratic_potential(Matrix::Constant(1, 1, p.R));
  params.voltage_potential = quadratic_potential(Matrix::Zero(1, 1));
  params.Bs = Matrix::Constant(1, 1, 1.0);
  params.domain = Box(Vector::Constant(2, -2.0), Vector::Constant(2, 2.0));
  RlcSystem sys = rlc_model(std::move(params));
  return sys;
}

RlcSystem rlc_two_mesh(const RlcTwoMeshParams& p) {
  RlcParams params;
  params.L = Eigen::Vector2d(p.L1, p.L2).asDiagonal();
  params.C = Eigen::Vector2d(p.C1, p.C2).asDiagonal();
  params.interconnection.resize(2, 2);
  params.interconnection << 1.0, 0.0, -1.0, 1.0;
  params.current_potential = quadratic_potential(Eigen::Vector2d(p.R1, p.R2).asDiagonal());
  params.voltage_potential =
      quadratic_potential(Eigen::Vector2d(1.0 / p.Rp, 1.0 / p.Rload).asDiagonal());
  params.Bs = (Matrix(2, 1) << 1.0, 0.0).finished();
  params.domain = Box(Vector::Constant(4, -2.0), Vector::Constant(4, 2.0));
  return rlc_model(std::move(params));
}

ControlAffineModel linear_model(const Matrix& a, const Matrix& b, const Matrix& metric,
                                const Box& domain, std::string name) {
  if (a.rows() != a.cols() || b.rows() != a.rows()) {
    throw std::invalid_argument("linear model: A must be n x n and B n x m");
  }
  if (metric.rows() != a.rows() || metric.cols() != a.cols()) {
    throw std::invalid_argument("linear model: metric must be n x n");
  }
  const auto n = static_cast<int>(a.rows());
  const auto m = static_cast<int>(b.cols());
  const Matrix mb = metric * b;
  ModelDefinition def;
  def.name = std::move(name);
  def.n = n;
  def.m = m;
  def.drift = [a](const Vector& x) -> Vector { return a * x; };
  def.drift_jacobian = [a](const Vector&) -> Matrix { return a; };
  def.input_matrix = [b](const Vector&) -> Matrix { return b; };
  def.input_matrix_directional = [n, m](const Vector&, const Vector&) -> Matrix {
    return Matrix::Zero(n, m);
  };
  def.potential = [mb](const Vector& x) -> Vector { return mb.transpose() * x; };
  def.metric = metric;
  def.state_domain = domain;
  return ControlAffineModel(std::move(def));
}

}  // namespace krasov::models
