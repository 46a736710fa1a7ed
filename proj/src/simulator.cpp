#include "krasov/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace krasov {

namespace {

// Relative round-off floor added to fitted audit tolerances.
constexpr double kRoundoffFloor = 1e-12;
// Fraction of the horizon over which convergence must be sustained.
constexpr double kSettleFraction = 0.05;

struct LoopPoint {
  Vector xdot;
  Vector y;
  Vector vdot;
  Vector udot;
};

Vector zero_or(const SignalFn& fn, double t, int m) {
  if (!fn) return Vector::Zero(m);
  Vector v = fn(t);
  if (v.size() != m) throw std::invalid_argument("signal returned wrong length");
  require_finite(v, "signal");
  return v;
}

LoopPoint evaluate_loop(const ControllerRealization& ctl, double t, const Vector& x,
                        const Vector& u, const SignalFn& vbar_dot) {
  const auto& model = ctl.model();
  LoopPoint p;
  p.xdot = model.drift(x) + model.input_matrix(x) * u;
  p.y = output_y(model, x, p.xdot);
  p.vdot = ctl.stabilizing_vdot(x, p.xdot, zero_or(vbar_dot, t, model.input_dim()));
  p.udot = alpha(model, x, p.xdot) * u - p.y + p.vdot;
  return p;
}

// xddot = df/dx xdot + (dg/dx . xdot) u + g udot.
Vector second_derivative(const ControlAffineModel& model, const Vector& x, const Vector& u,
                         const Vector& xd, const Vector& ud) {
  return model.drift_jacobian(x) * xd + model.input_matrix_directional(x, xd) * u +
         model.input_matrix(x) * ud;
}

TraceRecord make_record(const ControllerRealization& ctl, double t, const Vector& x,
                        const Vector& u, const SignalFn& vbar_dot) {
  const auto& model = ctl.model();
  const auto& gains = ctl.gains();
  const LoopPoint p = evaluate_loop(ctl, t, x, u, vbar_dot);
  TraceRecord r;
  r.t = t;
  r.x = x;
  r.u = u;
  r.xdot = p.xdot;
  r.y = p.y;
  r.vdot = p.vdot;
  const Vector m_xdot = model.M() * p.xdot;
  r.V = 0.5 * p.xdot.dot(m_xdot);
  r.Vd = ctl.closed_loop_storage(x, p.xdot);
  const Vector xdd = second_derivative(model, x, u, p.xdot, p.udot);
  r.Vdot = m_xdot.dot(xdd);
  const Vector shaped = ctl.potential(x) - ctl.setpoint().gamma_star;
  r.Vd_dot = gains.k1() * r.Vdot + gains.ki() * shaped.dot(p.y);
  return r;
}

void finalize(SimulationTrace& trace, double t_end, double band) {
  auto& recs = trace.records;
  auto& s = trace.summary;
  s = SimulationSummary{};
  if (recs.empty()) return;
  const double h = trace.log_interval();
  const double kd = trace.gains.kd();
  if (recs.size() >= 3) {
    std::vector<double> v, vd;
    for (const auto& r : recs) {
      v.push_back(r.V);
      vd.push_back(r.Vd);
    }
    const auto dv = differentiate(v, h);
    const auto dvd = differentiate(vd, h);
    for (std::size_t k = 0; k < recs.size(); ++k) {
      recs[k].storage_residual = dv[k] - recs[k].y.dot(recs[k].vdot);
      recs[k].vd_residual = dvd[k] + kd * recs[k].y.squaredNorm();
    }
  }
  s.max_storage_residual = -std::numeric_limits<double>::infinity();
  s.max_vd_residual = -std::numeric_limits<double>::infinity();
  s.peak_abs_u = Vector::Zero(trace.m);
  for (const auto& r : recs) {
    s.max_storage_residual = std::max(s.max_storage_residual, r.storage_residual);
    s.max_vd_residual = std::max(s.max_vd_residual, r.vd_residual);
    s.peak_abs_u = s.peak_abs_u.cwiseMax(r.u.cwiseAbs());
  }
  const Vector& xs = trace.setpoint.x_star;
  s.final_error = (recs.back().x - xs).cwiseAbs().maxCoeff();

  // Earliest logged time after which every record stays inside the band.
  std::optional<std::size_t> settle;
  for (std::size_t k = recs.size(); k-- > 0;) {
    if ((recs[k].x - xs).cwiseAbs().maxCoeff() < band) {
      settle = k;
    } else {
      break;
    }
  }
  const double window_start = (1.0 - kSettleFraction) * t_end;
  s.converged = settle.has_value() && recs[*settle].t <= window_start + 1e-12 * t_end;
  if (settle) s.t_converge = recs[*settle].t;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <typename Fn>
void write_row(std::ostream& os, double t, Fn&& body) {
  os << fmt_double(t);
  body([&](double v) { os << ',' << fmt_double(v); });
  os << '\n';
}

}  // namespace

Vector step_rk4(const DerivativeFn& deriv, double t, const Vector& z, double dt) {
  auto stage = [&](double ts, const Vector& zs) {
    Vector k = deriv(ts, zs);
    if (k.size() != z.size() || !k.allFinite()) {
      throw IntegrationError("step_rk4: non-finite stage derivative at t = " + fmt_double(ts), ts);
    }
    return k;
  };
  const Vector k1 = stage(t, z);
  const Vector k2 = stage(t + 0.5 * dt, z + 0.5 * dt * k1);
  const Vector k3 = stage(t + 0.5 * dt, z + 0.5 * dt * k2);
  const Vector k4 = stage(t + dt, z + dt * k3);
  return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

long step_count(double t_end, double dt) {
  const double ratio = t_end / dt;
  const double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, nearest)) return static_cast<long>(nearest);
  return static_cast<long>(std::floor(ratio));
}

std::vector<double> differentiate(const std::vector<double>& values, double spacing) {
  const std::size_t n = values.size();
  if (n < 3) throw std::invalid_argument("differentiate: need at least three samples");
  if (!(spacing > 0.0)) throw std::invalid_argument("differentiate: spacing must be positive");
  std::vector<double> d(n);
  d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * spacing);
  for (std::size_t k = 1; k + 1 < n; ++k) d[k] = (values[k + 1] - values[k - 1]) / (2.0 * spacing);
  d[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * spacing);
  return d;
}

void SimulationConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("SimulationConfig: dt must be > 0");
  if (!(t_end >= dt)) throw std::invalid_argument("SimulationConfig: t_end must be >= dt");
  if (log_stride < 1) throw std::invalid_argument("SimulationConfig: log_stride must be >= 1");
  if (!(convergence_band > 0.0)) {
    throw std::invalid_argument("SimulationConfig: convergence band must be > 0");
  }
}

namespace {

ControllerRealization prepare(const ControlAffineModel& model, const SimulationConfig& config) {
  config.validate();
  model.check_state(config.x0);
  model.check_state(config.x_star);
  Setpoint sp = make_setpoint(model, config.x_star);
  if (!config.waive_assumptions) {
    const auto report = check_all(model, config.assumption_check);
    if (!report.all_pass()) {
      throw AssumptionError(model.name() + ": assumptions A1-A3 not satisfied: " +
                            to_json(report).dump());
    }
  }
  Vector u0 = config.u0.size() ? config.u0 : Vector::Zero(model.input_dim());
  return ControllerRealization(model, config.gains, std::move(sp), std::move(u0));
}

}  // namespace

SimulationTrace simulate_closed_loop(const ControlAffineModel& model, const SimulationConfig& config) {
  ControllerRealization ctl = prepare(model, config);
  const int n = model.state_dim();
  const int m = model.input_dim();

  SimulationTrace trace;
  trace.n = n;
  trace.m = m;
  trace.dt = config.dt;
  trace.log_stride = config.log_stride;
  trace.zero_vbar_dot = !config.vbar_dot;
  trace.gains = config.gains;
  trace.setpoint = ctl.setpoint();

  const long steps = step_count(config.t_end, config.dt);
  trace.records.reserve(static_cast<std::size_t>(steps / config.log_stride + 1));

  const DerivativeFn deriv = [&](double t, const Vector& z) {
    const Vector x = z.head(n);
    const Vector u = z.tail(m);
    const LoopPoint p = evaluate_loop(ctl, t, x, u, config.vbar_dot);
    Vector dz(n + m);
    dz << p.xdot, p.udot;
    return dz;
  };

  Vector z(n + m);
  z << config.x0, ctl.u();
  double t = 0.0;
  try {
    for (long k = 0;; ++k) {
      t = static_cast<double>(k) * config.dt;
      if (k % config.log_stride == 0) {
        trace.records.push_back(make_record(ctl, t, z.head(n), z.tail(m), config.vbar_dot));
      }
      if (k == steps) break;
      z = step_rk4(deriv, t, z, config.dt);
      ctl.set_u(z.tail(m));
    }
  } catch (const Error& e) {
    finalize(trace, config.t_end, config.convergence_band);
    trace.summary.converged = false;
    throw SimulationAborted(std::string("simulation aborted at t = ") + fmt_double(t) + ": " +
                                e.what(),
                            std::move(trace), t);
  }
  finalize(trace, config.t_end, config.convergence_band);
  return trace;
}

double AuditReport::worst_violation() const {
  double w = max_storage_violation;
  if (vd_checked) w = std::max({w, max_vd_violation, max_vd_increase});
  return w;
}

AuditReport passivity_audit(const SimulationTrace& trace, const ControllerGains& gains) {
  const auto& recs = trace.records;
  if (recs.size() < 3) throw std::invalid_argument("passivity_audit: need at least three records");
  const double h = trace.log_interval();
  std::vector<double> v, vd;
  v.reserve(recs.size());
  vd.reserve(recs.size());
  for (const auto& r : recs) {
    v.push_back(r.V);
    vd.push_back(r.Vd);
  }
  const auto dv = differentiate(v, h);
  const auto dvd = differentiate(vd, h);

  AuditReport a;
  a.log_interval = h;
  a.vd_checked = trace.zero_vbar_dot;
  double worst_s = -std::numeric_limits<double>::infinity();
  double worst_d = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const auto& r = recs[k];
    const double s = dv[k] - r.y.dot(r.vdot);
    if (s > worst_s) {
      worst_s = s;
      a.t_worst_storage = r.t;
    }
    const double d = dvd[k] + gains.kd() * r.y.squaredNorm();
    if (d > worst_d) {
      worst_d = d;
      a.t_worst_vd = r.t;
    }
    a.max_vd_increase = std::max(a.max_vd_increase, dvd[k]);
    a.storage_fd_error = std::max(a.storage_fd_error, std::abs(dv[k] - r.Vdot));
    a.vd_fd_error = std::max(a.vd_fd_error, std::abs(dvd[k] - r.Vd_dot));
    a.derivative_scale = std::max({a.derivative_scale, std::abs(r.Vdot), std::abs(r.Vd_dot),
                                   std::abs(r.y.dot(r.vdot))});
  }
  a.max_storage_violation = std::max(0.0, worst_s);
  a.max_vd_violation = a.vd_checked ? std::max(0.0, worst_d) : 0.0;
  if (!a.vd_checked) a.max_vd_increase = 0.0;
  return a;
}

AuditTolerance calibrate_tolerance(double coarse_fd_error, double coarse_interval,
                                   double fine_fd_error, double fine_interval,
                                   double derivative_scale) {
  if (!(coarse_interval > 0.0) || !(fine_interval > 0.0)) {
    throw std::invalid_argument("calibrate_tolerance: intervals must be positive");
  }
  AuditTolerance tol;
  tol.constant = std::max(coarse_fd_error / (coarse_interval * coarse_interval),
                          fine_fd_error / (fine_interval * fine_interval));
  tol.eps_num = tol.constant * coarse_interval * coarse_interval +
                kRoundoffFloor * (1.0 + derivative_scale);
  tol.refinement_ratio = fine_fd_error > 0.0 ? coarse_fd_error / fine_fd_error
                                             : std::numeric_limits<double>::quiet_NaN();
  return tol;
}

AuditTolerance calibrate_tolerance(const AuditReport& coarse, const AuditReport& fine) {
  return calibrate_tolerance(coarse.worst_fd_error(), coarse.log_interval, fine.worst_fd_error(),
                             fine.log_interval, coarse.derivative_scale);
}

VariationalTrace simulate_prolonged(const ControlAffineModel& model, const SimulationConfig& config,
                                    const Vector& dx0, const SignalFn& dv) {
  ControllerRealization ctl = prepare(model, config);
  const int n = model.state_dim();
  const int m = model.input_dim();
  if (dx0.size() != n) throw std::invalid_argument("simulate_prolonged: dx0 has wrong length");
  require_finite(dx0, "simulate_prolonged: dx0");

  struct VarPoint {
    LoopPoint loop;
    Vector du;
    Vector dy;
    Vector dv;
    Vector dxdot;
  };
  auto evaluate = [&](double t, const Vector& x, const Vector& u, const Vector& dx) {
    VarPoint p;
    p.loop = evaluate_loop(ctl, t, x, u, config.vbar_dot);
    const Matrix g = model.input_matrix(x);
    const Matrix dg = model.input_matrix_directional(x, dx);
    p.dv = zero_or(dv, t, m);
    p.dy = output_y(model, x, dx);
    // alpha and beta of the variational input law take dx where the state law has xdot.
    p.du = alpha(model, x, dx) * u - p.dy + p.dv;
    p.dxdot = model.drift_jacobian(x) * dx + dg * u + g * p.du;
    return p;
  };

  VariationalTrace trace;
  trace.n = n;
  trace.m = m;
  trace.dt = config.dt;
  trace.log_stride = config.log_stride;

  const DerivativeFn deriv = [&](double t, const Vector& z) {
    const VarPoint p = evaluate(t, z.head(n), z.segment(n, m), z.tail(n));
    Vector dz(2 * n + m);
    dz << p.loop.xdot, p.loop.udot, p.dxdot;
    return dz;
  };

  const long steps = step_count(config.t_end, config.dt);
  Vector z(2 * n + m);
  z << config.x0, ctl.u(), dx0;
  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) * config.dt;
    if (k % config.log_stride == 0) {
      const Vector x = z.head(n);
      const Vector u = z.segment(n, m);
      const Vector dx = z.tail(n);
      const VarPoint p = evaluate(t, x, u, dx);
      VariationalRecord r;
      r.t = t;
      r.x = x;
      r.u = u;
      r.dx = dx;
      r.du = p.du;
      r.dy = p.dy;
      r.dv = p.dv;
      const Vector m_dx = model.M() * dx;
      r.storage = 0.5 * dx.dot(m_dx);
      r.storage_dot = m_dx.dot(p.dxdot);
      trace.records.push_back(std::move(r));
    }
    if (k == steps) break;
    z = step_rk4(deriv, t, z, config.dt);
  }

  if (trace.records.size() >= 3) {
    std::vector<double> s;
    for (const auto& r : trace.records) s.push_back(r.storage);
    const auto ds = differentiate(s, trace.log_interval());
    for (std::size_t k = 0; k < ds.size(); ++k) {
      trace.records[k].residual = ds[k] - trace.records[k].dy.dot(trace.records[k].dv);
    }
  }
  return trace;
}

VariationalAudit variational_audit(const VariationalTrace& trace) {
  const auto& recs = trace.records;
  if (recs.size() < 3) throw std::invalid_argument("variational_audit: need at least three records");
  std::vector<double> s;
  for (const auto& r : recs) s.push_back(r.storage);
  const auto ds = differentiate(s, trace.log_interval());
  VariationalAudit a;
  a.log_interval = trace.log_interval();
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const double port = recs[k].dy.dot(recs[k].dv);
    a.max_violation = std::max(a.max_violation, ds[k] - port);
    a.fd_error = std::max(a.fd_error, std::abs(ds[k] - recs[k].storage_dot));
    a.derivative_scale = std::max({a.derivative_scale, std::abs(recs[k].storage_dot), std::abs(port)});
    if (k + 1 < recs.size()) a.max_increase = std::max(a.max_increase, s[k + 1] - s[k]);
  }
  return a;
}

OpenLoopTrace simulate_open_loop(const ControlAffineModel& model, const SignalFn& input,
                                 const SignalFn& input_rate, const Vector& x0, double dt,
                                 double t_end, int log_stride) {
  if (!(dt > 0.0) || !(t_end >= dt) || log_stride < 1) {
    throw std::invalid_argument("simulate_open_loop: need dt > 0, t_end >= dt, log_stride >= 1");
  }
  model.check_state(x0);
  const int m = model.input_dim();
  OpenLoopTrace trace;
  trace.dt = dt;
  trace.log_stride = log_stride;

  const DerivativeFn deriv = [&](double t, const Vector& x) {
    return Vector(model.drift(x) + model.input_matrix(x) * zero_or(input, t, m));
  };

  const long steps = step_count(t_end, dt);
  Vector x = x0;
  for (long k = 0;; ++k) {
    const double t = static_cast<double>(k) * dt;
    if (k % log_stride == 0) {
      OpenLoopRecord r;
      r.t = t;
      r.x = x;
      r.u = zero_or(input, t, m);
      r.udot = zero_or(input_rate, t, m);
      r.xdot = model.drift(x) + model.input_matrix(x) * r.u;
      r.y = output_y(model, x, r.xdot);
      const Vector m_xdot = model.M() * r.xdot;
      r.V = 0.5 * r.xdot.dot(m_xdot);
      const Vector xdd = model.drift_jacobian(x) * r.xdot +
                         model.input_matrix_directional(x, r.xdot) * r.u +
                         model.input_matrix(x) * r.udot;
      r.Vdot = m_xdot.dot(xdd);
      trace.records.push_back(std::move(r));
    }
    if (k == steps) break;
    x = step_rk4(deriv, t, x, dt);
  }
  if (trace.records.size() >= 3) {
    std::vector<double> v;
    for (const auto& r : trace.records) v.push_back(r.V);
    const auto dv = differentiate(v, trace.log_interval());
    for (std::size_t k = 0; k < dv.size(); ++k) {
      trace.records[k].residual = dv[k] - trace.records[k].y.dot(trace.records[k].udot);
    }
  }
  return trace;
}

OpenLoopAudit open_loop_audit(const OpenLoopTrace& trace) {
  const auto& recs = trace.records;
  if (recs.size() < 3) throw std::invalid_argument("open_loop_audit: need at least three records");
  std::vector<double> v;
  for (const auto& r : recs) v.push_back(r.V);
  const auto dv = differentiate(v, trace.log_interval());
  OpenLoopAudit a;
  a.log_interval = trace.log_interval();
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const double port = recs[k].y.dot(recs[k].udot);
    a.max_violation = std::max(a.max_violation, dv[k] - port);
    a.fd_error = std::max(a.fd_error, std::abs(dv[k] - recs[k].Vdot));
    a.derivative_scale = std::max({a.derivative_scale, std::abs(recs[k].Vdot), std::abs(port)});
    if (k + 1 < recs.size()) a.max_increase = std::max(a.max_increase, v[k + 1] - v[k]);
  }
  return a;
}

void write_trace_csv(std::ostream& os, const SimulationTrace& trace) {
  os << 't';
  for (int i = 1; i <= trace.n; ++i) os << ",x" << i;
  for (int i = 1; i <= trace.m; ++i) os << ",u" << i;
  for (int i = 1; i <= trace.m; ++i) os << ",y" << i;
  for (int i = 1; i <= trace.m; ++i) os << ",vdot" << i;
  os << ",V,Vd,storage_residual,vd_residual\n";
  for (const auto& r : trace.records) {
    write_row(os, r.t, [&](auto put) {
      for (double v : r.x) put(v);
      for (double v : r.u) put(v);
      for (double v : r.y) put(v);
      for (double v : r.vdot) put(v);
      put(r.V);
      put(r.Vd);
      put(r.storage_residual);
      put(r.vd_residual);
    });
  }
}

void write_variational_csv(std::ostream& os, const VariationalTrace& trace) {
  os << 't';
  for (int i = 1; i <= trace.n; ++i) os << ",x" << i;
  for (int i = 1; i <= trace.m; ++i) os << ",u" << i;
  for (int i = 1; i <= trace.n; ++i) os << ",dx" << i;
  for (int i = 1; i <= trace.m; ++i) os << ",du" << i;
  for (int i = 1; i <= trace.m; ++i) os << ",dy" << i;
  for (int i = 1; i <= trace.m; ++i) os << ",dv" << i;
  os << ",dstorage,dstorage_residual\n";
  for (const auto& r : trace.records) {
    write_row(os, r.t, [&](auto put) {
      for (double v : r.x) put(v);
      for (double v : r.u) put(v);
      for (double v : r.dx) put(v);
      for (double v : r.du) put(v);
      for (double v : r.dy) put(v);
      for (double v : r.dv) put(v);
      put(r.storage);
      put(r.residual);
    });
  }
}

}  // namespace krasov
