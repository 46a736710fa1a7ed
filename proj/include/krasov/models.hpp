#pragma once

#include <functional>

#include <nlohmann/json.hpp>

#include "krasov/simulator.hpp"
#include "krasov/system.hpp"

namespace krasov::models {

/// Two zones (T1, T2) separated by a 3R2C wall (T3, T4), each zone also
/// coupled to ambient. Temperatures are deviations from a reference, so the
/// default supply temperature sits well below the operating band.
///
///   C1 T1' = (T3 - T1)/R31 + (Tinf - T1)/R10 + u1 cp (Ts - T1)
///   C2 T2' = (T4 - T2)/R42 + (Tinf - T2)/R20 + u2 cp (Ts - T2)
///   C3 T3' = (T1 - T3)/R31 + (T4 - T3)/R34
///   C4 T4' = (T2 - T4)/R42 + (T3 - T4)/R34
struct HvacTwoZoneParams {
  double C1 = 1.0;
  double C2 = 1.0;
  double C3 = 2.0;
  double C4 = 2.0;
  double R31 = 1.0;  // also R13
  double R42 = 1.0;  // also R24
  double R34 = 1.0;
  double R10 = 1.0;
  double R20 = 1.0;
  double cp = 1.0;
  double Ts = -10.0;
  double Tinf = 0.0;
  /// Sampling box for the assumption checks (same bounds on every coordinate).
  double domain_lower = -5.0;
  double domain_upper = 15.0;

  void validate() const;
};

ControlAffineModel hvac_model(const HvacTwoZoneParams& params = {});

/// Grounded RC conductance matrix L with C T' = -L T + b.
Matrix hvac_conductance(const HvacTwoZoneParams& params);

/// Full equilibrium state for zone targets (T1*, T2*): the wall temperatures
/// solve the last two rows with zero derivative.
Vector hvac_equilibrium_state(const HvacTwoZoneParams& params, double t1_star, double t2_star);

struct HvacScenario {
  HvacTwoZoneParams params;
  ControlAffineModel model;
  SimulationConfig config;
};

/// Default parameters, zone targets (2.5, 6), all temperatures starting at
/// ambient, u(0) = 0, gains (1, 1, 1), dt = 1e-3, t_end = 40.
HvacScenario hvac_default_scenario();

nlohmann::json to_json(const HvacTwoZoneParams& params);

/// Scalar potential with gradient and Hessian, e.g. a resistor's content.
struct ScalarPotential {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian;
};

/// 1/2 z^T Q z.
ScalarPotential quadratic_potential(const Matrix& q);

/// Brayton-Moser circuit with inductor currents i and capacitor voltages v:
///   -L di/dt = dP/di - Bs Vs,   C dv/dt = dP/dv,   P = i^T Gamma v + G(i) - J(v).
struct RlcParams {
  Matrix L;
  Matrix C;
  Matrix interconnection;
  ScalarPotential current_potential;
  ScalarPotential voltage_potential;
  Matrix Bs;
  /// Sampling box on (i, v).
  Box domain;

  int n_l() const { return static_cast<int>(L.rows()); }
  int n_c() const { return static_cast<int>(C.rows()); }
  void validate() const;
};

/// The circuit as a control-affine model (x = (i, v), u = Vs, M = diag(L, C))
/// plus its mixed potential and Krasovskii storage.
struct RlcSystem {
  RlcParams params;
  ControlAffineModel model;

  /// P(i, v).
  double mixed_potential(const Vector& x) const;
  /// (dP/di, dP/dv).
  Vector mixed_potential_gradient(const Vector& x) const;
  /// (di/dt, dv/dt) solved from the Brayton-Moser equations at source Vs.
  Vector rates(const Vector& x, const Vector& vs) const;
  /// S = 1/2 i_t^T L i_t + 1/2 v_t^T C v_t.
  double storage(const Vector& x, const Vector& vs) const;
};

RlcSystem rlc_model(RlcParams params);

struct RlcSeriesParams {
  double L = 1.0;
  double C = 1.0;
  double R = 0.5;
};

/// Series R-L-C loop driven by one source: G = R i^2 / 2, J = 0, Bs = 1.
RlcSystem rlc_series(const RlcSeriesParams& p = {});

struct RlcTwoMeshParams {
  double L1 = 1.0;
  double L2 = 1.0;
  double C1 = 1.0;
  double C2 = 1.0;
  double R1 = 0.5;
  double R2 = 0.5;
  /// Leakage across C1 and load across C2 (both enter J).
  double Rp = 10.0;
  double Rload = 2.0;
};

/// Two-mesh ladder: source + L1 + R1 into C1, then L2 + R2 into C2 || Rload,
/// with a leakage conductance across C1.
RlcSystem rlc_two_mesh(const RlcTwoMeshParams& p = {});

/// xdot = A x + B u with constant metric; used for toy checks.
ControlAffineModel linear_model(const Matrix& a, const Matrix& b, const Matrix& metric,
                                const Box& domain, std::string name = "linear");

}  // namespace krasov::models
