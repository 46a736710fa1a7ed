#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "krasov/assumptions.hpp"
#include "krasov/control.hpp"
#include "krasov/system.hpp"

namespace krasov {

/// (t, z) -> dz/dt.
using DerivativeFn = std::function<Vector(double, const Vector&)>;
/// t -> value in R^m.
using SignalFn = std::function<Vector(double)>;

/// One classical 4-stage Runge-Kutta step. Throws IntegrationError if any
/// stage derivative is non-finite.
Vector step_rk4(const DerivativeFn& deriv, double t, const Vector& z, double dt);

/// Number of whole steps of size dt that fit in t_end (tolerant to the
/// representation error of decimal step sizes).
long step_count(double t_end, double dt);

/// Second-order accurate derivative of uniformly spaced samples: central
/// differences inside, three-point one-sided formulas at both ends.
std::vector<double> differentiate(const std::vector<double>& values, double spacing);

struct SimulationConfig {
  double t_end = 40.0;
  double dt = 1e-3;
  Vector x0;
  /// Empty means u(0) = 0.
  Vector u0;
  ControllerGains gains;
  /// Target state x*; u* and Gamma(x*) are resolved before the run.
  Vector x_star;
  /// Outer port input; empty means identically zero.
  SignalFn vbar_dot;
  int log_stride = 1;
  bool waive_assumptions = false;
  AssumptionConfig assumption_check;
  /// Converged iff |x - x*|_inf stays below this over the final 5% of the horizon.
  double convergence_band = 0.01;

  void validate() const;
};

struct TraceRecord {
  double t = 0.0;
  Vector x;
  Vector u;
  Vector xdot;
  Vector y;
  Vector vdot;
  /// Krasovskii storage 1/2 xdot^T M xdot.
  double V = 0.0;
  /// Closed-loop storage k1 V + ki/2 |Gamma - Gamma*|^2.
  double Vd = 0.0;
  /// Model-evaluated time derivatives of V and Vd (xdot^T M xddot, ...).
  double Vdot = 0.0;
  double Vd_dot = 0.0;
  /// dV/dt (finite-differenced over the log) - y^T vdot.
  double storage_residual = 0.0;
  /// dVd/dt (finite-differenced over the log) + kd y^T y.
  double vd_residual = 0.0;
};

struct SimulationSummary {
  bool converged = false;
  std::optional<double> t_converge;
  double final_error = 0.0;
  double max_storage_residual = 0.0;
  double max_vd_residual = 0.0;
  Vector peak_abs_u;
};

struct SimulationTrace {
  int n = 0;
  int m = 0;
  double dt = 0.0;
  int log_stride = 1;
  bool zero_vbar_dot = true;
  ControllerGains gains;
  Setpoint setpoint;
  std::vector<TraceRecord> records;
  SimulationSummary summary;

  double log_interval() const { return dt * log_stride; }
};

/// Thrown when a run stops early (singular alpha, blow-up). Carries the
/// records logged so far, with residuals and summary filled in.
class SimulationAborted : public Error {
 public:
  SimulationAborted(const std::string& what, SimulationTrace partial, double t)
      : Error(what), partial_(std::move(partial)), t_(t) {}

  const SimulationTrace& partial() const { return partial_; }
  double time() const { return t_; }

 private:
  SimulationTrace partial_;
  double t_;
};

/// Integrates z = (x, u) with xdot = f + g u and udot = alpha u + beta + vdot,
/// vdot from the potential-shaping law. Throws InfeasibleSetpointError up
/// front, AssumptionError if A1-A3 fail and are not waived, and
/// SimulationAborted mid-run.
SimulationTrace simulate_closed_loop(const ControlAffineModel& model, const SimulationConfig& config);

/// Worst finite-difference violations of the storage inequalities along a trace.
struct AuditReport {
  /// max(0, max_k dV/dt - y^T vdot).
  double max_storage_violation = 0.0;
  /// max(0, max_k dVd/dt + kd y^T y); only when vbar_dot is identically zero.
  double max_vd_violation = 0.0;
  /// max(0, max_k dVd/dt): Vd must not grow when vbar_dot is zero.
  double max_vd_increase = 0.0;
  bool vd_checked = false;
  /// Largest gap between differenced and model-evaluated dV/dt, dVd/dt. This
  /// is the discretization slack the violations are judged against.
  double storage_fd_error = 0.0;
  double vd_fd_error = 0.0;
  /// Scale for the round-off floor of the tolerance.
  double derivative_scale = 0.0;
  double log_interval = 0.0;
  double t_worst_storage = 0.0;
  double t_worst_vd = 0.0;

  double worst_violation() const;
  double worst_fd_error() const { return std::max(storage_fd_error, vd_fd_error); }
  bool clean(double eps_num) const { return worst_violation() <= eps_num; }
};

AuditReport passivity_audit(const SimulationTrace& trace, const ControllerGains& gains);

/// eps_num = C h^2 (+ round-off floor) for the coarse log interval h, with C
/// fitted from a run and its dt-halved twin.
struct AuditTolerance {
  double constant = 0.0;
  double eps_num = 0.0;
  /// coarse / fine discretization slack; about 4 for a second-order scheme.
  double refinement_ratio = 0.0;
};

AuditTolerance calibrate_tolerance(double coarse_fd_error, double coarse_interval,
                                   double fine_fd_error, double fine_interval,
                                   double derivative_scale);
AuditTolerance calibrate_tolerance(const AuditReport& coarse, const AuditReport& fine);

/// Record of the prolonged (state + variational) system.
struct VariationalRecord {
  double t = 0.0;
  Vector x;
  Vector u;
  Vector dx;
  Vector du;
  Vector dy;
  Vector dv;
  /// 1/2 dx^T M dx.
  double storage = 0.0;
  /// dx^T M d(dx)/dt from the model.
  double storage_dot = 0.0;
  /// d(storage)/dt (finite-differenced) - dy^T dv.
  double residual = 0.0;
};

struct VariationalTrace {
  int n = 0;
  int m = 0;
  double dt = 0.0;
  int log_stride = 1;
  std::vector<VariationalRecord> records;

  double log_interval() const { return dt * log_stride; }
};

/// Keeps every `stride`-th record of a trace (the first record always
/// survives). Audits run on the integration grid; outputs may be thinner.
template <typename Trace>
Trace decimate(const Trace& trace, int stride) {
  if (stride < 1) throw std::invalid_argument("decimate: stride must be >= 1");
  Trace out = trace;
  out.log_stride = trace.log_stride * stride;
  out.records.clear();
  for (std::size_t k = 0; k < trace.records.size(); k += static_cast<std::size_t>(stride)) {
    out.records.push_back(trace.records[k]);
  }
  return out;
}

struct VariationalAudit {
  double max_violation = 0.0;
  double fd_error = 0.0;
  /// max(0, max_k storage_{k+1} - storage_k).
  double max_increase = 0.0;
  double derivative_scale = 0.0;
  double log_interval = 0.0;
};

/// Co-integrates the closed loop with dx' = (df/dx + (dg/dx) u) dx + g du,
/// where du = alpha_d u + beta_d + dv is algebraic and alpha_d, beta_d use the
/// variation dx in place of xdot.
VariationalTrace simulate_prolonged(const ControlAffineModel& model, const SimulationConfig& config,
                                    const Vector& dx0, const SignalFn& dv = {});

VariationalAudit variational_audit(const VariationalTrace& trace);

/// Open-loop run driven by a prescribed input u(t) with known rate udot(t).
struct OpenLoopRecord {
  double t = 0.0;
  Vector x;
  Vector u;
  Vector xdot;
  Vector y;
  Vector udot;
  double V = 0.0;
  double Vdot = 0.0;
  /// dV/dt (finite-differenced) - y^T udot.
  double residual = 0.0;
};

struct OpenLoopTrace {
  double dt = 0.0;
  int log_stride = 1;
  std::vector<OpenLoopRecord> records;

  double log_interval() const { return dt * log_stride; }
};

OpenLoopTrace simulate_open_loop(const ControlAffineModel& model, const SignalFn& input,
                                 const SignalFn& input_rate, const Vector& x0, double dt,
                                 double t_end, int log_stride = 1);

struct OpenLoopAudit {
  double max_violation = 0.0;
  double fd_error = 0.0;
  double max_increase = 0.0;
  double derivative_scale = 0.0;
  double log_interval = 0.0;
};

OpenLoopAudit open_loop_audit(const OpenLoopTrace& trace);

/// CSV: t,x1..xn,u1..um,y1..ym,vdot1..vdotm,V,Vd,storage_residual,vd_residual
void write_trace_csv(std::ostream& os, const SimulationTrace& trace);
/// CSV: t,x1..xn,u1..um,dx1..dxn,du1..dum,dy1..dym,dv1..dvm,dstorage,dstorage_residual
void write_variational_csv(std::ostream& os, const VariationalTrace& trace);

}  // namespace krasov
