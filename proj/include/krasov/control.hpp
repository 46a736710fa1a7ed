#pragma once

#include "krasov/system.hpp"

namespace krasov {

/// Outer-loop gains: k1 > 0 scales the Krasovskii term of the closed-loop
/// storage, kd >= 0 injects damping on y, ki > 0 shapes the potential.
class ControllerGains {
 public:
  ControllerGains() = default;
  ControllerGains(double k1, double kd, double ki);

  /// Skips the sign checks. Only for deliberately broken controllers, e.g. to
  /// confirm that a passivity audit flags negative damping.
  static ControllerGains forced(double k1, double kd, double ki);

  double k1() const { return k1_; }
  double kd() const { return kd_; }
  double ki() const { return ki_; }

 private:
  double k1_ = 1.0;
  double kd_ = 1.0;
  double ki_ = 1.0;
};

/// Target operating point (x*, u*) with f(x*) + g(x*) u* = 0 and Gamma(x*).
struct Setpoint {
  Vector x_star;
  Vector u_star;
  Vector gamma_star;
};

/// Rejects cond(g^T g) above this in alpha().
inline constexpr double kMaxGramCondition = 1e12;
/// |f(x*) + g(x*) u*| must fall below this for a setpoint to be admissible.
inline constexpr double kEquilibriumTolerance = 1e-9;
inline constexpr int kDefaultPathSegments = 1000;

/// f(x) + g(x) u.
Vector xdot(const ControlAffineModel& model, const Vector& x, const Vector& u);

/// alpha = -(g^T g)^{-1} g^T gdot with gdot = (dg/dx) . xdot_val.
/// Throws SingularityError when cond(g^T g) exceeds kMaxGramCondition.
Matrix alpha(const ControlAffineModel& model, const Vector& x, const Vector& xdot_val);

/// beta = -g^T M xdot_val.
Vector beta(const ControlAffineModel& model, const Vector& x, const Vector& xdot_val);

/// Power-shaping output y = g^T M xdot_val.
Vector output_y(const ControlAffineModel& model, const Vector& x, const Vector& xdot_val);

/// Controller state equation alpha u + beta + vdot evaluated at xdot = f + g u.
Vector u_dot(const ControlAffineModel& model, const Vector& x, const Vector& u, const Vector& vdot);

/// Trapezoid line integral of (M g)^T dx along the polyline through
/// `waypoints`, using `segments` sub-intervals per leg.
Vector line_integral(const ControlAffineModel& model, const std::vector<Vector>& waypoints,
                     int segments = kDefaultPathSegments);

/// Gamma(x) - Gamma(x_ref) along the straight segment from x_ref to x.
Vector potential_via_path(const ControlAffineModel& model, const Vector& x, const Vector& x_ref,
                          int segments = kDefaultPathSegments);

/// Gamma(x): the model's closed form when present, otherwise a path integral
/// anchored at the domain center. The fallback compares a straight and a
/// dog-leg path and throws IntegrabilityError if they disagree.
Vector potential_gamma(const ControlAffineModel& model, const Vector& x);

/// Least-squares u* for f(x*) + g(x*) u* = 0; throws InfeasibleSetpointError
/// when the residual is not below kEquilibriumTolerance.
Vector solve_equilibrium_input(const ControlAffineModel& model, const Vector& x_star);

/// State x with f(x) + g(x) u = 0 for a constant input, by Newton iteration
/// from `guess` (domain center if empty).
Vector equilibrium_state_for_input(const ControlAffineModel& model, const Vector& u,
                                   const Vector& guess = Vector());

/// Resolves u* and Gamma(x*) for a target state.
Setpoint make_setpoint(const ControlAffineModel& model, const Vector& x_star);

/// Dynamic state feedback udot = alpha u + beta + vdot closed by the outer
/// potential-shaping law. Owns the controller state u; one realization per run.
class ControllerRealization {
 public:
  ControllerRealization(ControlAffineModel model, ControllerGains gains, Setpoint setpoint,
                        Vector u0);

  const ControlAffineModel& model() const { return model_; }
  const ControllerGains& gains() const { return gains_; }
  const Setpoint& setpoint() const { return setpoint_; }

  const Vector& u() const { return u_; }
  void set_u(Vector u);

  Vector potential(const Vector& x) const { return potential_gamma(model_, x); }

  /// (1/k1) (vbar_dot - kd y - ki (Gamma(x) - Gamma(x*))).
  Vector stabilizing_vdot(const Vector& x, const Vector& xdot_val, const Vector& vbar_dot) const;

  /// Closed-loop storage V_d = k1/2 xdot^T M xdot + ki/2 |Gamma(x) - Gamma(x*)|^2.
  double closed_loop_storage(const Vector& x, const Vector& xdot_val) const;

 private:
  ControlAffineModel model_;
  ControllerGains gains_;
  Setpoint setpoint_;
  Vector u_;
};

Vector stabilizing_vdot(const ControllerRealization& realization, const Vector& x,
                        const Vector& xdot_val, const Vector& vbar_dot);

}  // namespace krasov
