#include <cmath>
#include <sstream>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "krasov/models.hpp"
#include "krasov/simulator.hpp"
#include "oracles.hpp"

using krasov::Matrix;
using krasov::Vector;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

krasov::SimulationConfig short_hvac(double t_end, int stride = 1) {
  auto sc = krasov::models::hvac_default_scenario();
  sc.config.t_end = t_end;
  sc.config.log_stride = stride;
  return sc.config;
}

}  // namespace

TEST(Rk4, ConstantAndZeroFields) {
  const Vector z = (Vector(2) << 1.0, -2.0).finished();
  EXPECT_EQ(krasov::step_rk4([](double, const Vector& v) { return Vector(Vector::Zero(v.size())); }, 0.0, z, 0.1), z);
  const Vector next = krasov::step_rk4([](double, const Vector& v) { return Vector(Vector::Ones(v.size())); }, 0.0, z, 0.25);
  EXPECT_EQ(next, Vector(z.array() + 0.25));
}

TEST(Rk4, ScalarExponentialStep) {
  const Vector z = krasov::step_rk4([](double, const Vector& v) { return Vector(-v); }, 0.0, scalar(1.0), 0.1);
  EXPECT_NEAR(z(0), 0.9048375, 1e-7);
  EXPECT_NEAR(z(0), std::exp(-0.1), 1e-7);
}

TEST(Rk4, NonFiniteStageThrowsWithTime) {
  auto bad = [](double t, const Vector& v) {
    return t > 1.05 ? Vector(Vector::Constant(v.size(), NAN)) : Vector(v);
  };
  try {
    krasov::step_rk4(bad, 1.0, scalar(1.0), 0.1);
    FAIL() << "expected IntegrationError";
  } catch (const krasov::IntegrationError& e) {
    EXPECT_GE(e.time(), 1.0);
  }
}

TEST(Rk4, FourthOrderOnLinearHvacDrift) {
  const auto model = krasov::models::hvac_model();
  const oracle::Hvac o;
  const Eigen::Matrix4d cinv = Eigen::Vector4d(1.0, 1.0, 0.5, 0.5).asDiagonal();
  const Eigen::Matrix4d a = -cinv * o.conductance();
  const Vector x0 = (Vector(4) << 10.0, -3.0, 4.0, 0.0).finished();
  const double t_end = 2.0;
  const Vector exact = Matrix((a * t_end).exp()) * x0;
  double errs[3];
  const double dts[3] = {0.05, 0.025, 0.0125};
  for (int k = 0; k < 3; ++k) {
    const auto tr = krasov::simulate_open_loop(model, {}, {}, x0, dts[k], t_end);
    errs[k] = (tr.records.back().x - exact).norm();
  }
  // Fourth order: each halving of dt cuts the global error about 16x.
  EXPECT_NEAR(errs[0] / errs[1], 16.0, 16.0 * 0.15);
  EXPECT_NEAR(errs[1] / errs[2], 16.0, 16.0 * 0.15);
}

TEST(StepCount, TolerantOfDecimalSteps) {
  EXPECT_EQ(krasov::step_count(0.3, 0.1), 3);
  EXPECT_EQ(krasov::step_count(40.0, 1e-3), 40000);
  EXPECT_EQ(krasov::step_count(1.0, 0.3), 3);
}

TEST(Differentiate, ExactOnQuadratics) {
  std::vector<double> v;
  for (int k = 0; k < 7; ++k) {
    const double t = 0.5 * k;
    v.push_back(3.0 * t * t - t + 2.0);
  }
  const auto d = krasov::differentiate(v, 0.5);
  for (int k = 0; k < 7; ++k) EXPECT_NEAR(d[k], 6.0 * 0.5 * k - 1.0, 1e-12);
}

TEST(SimulationConfig, RejectsInvalid) {
  auto cfg = short_hvac(1.0);
  cfg.dt = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = short_hvac(1.0);
  cfg.t_end = 1e-4;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = short_hvac(1.0);
  cfg.log_stride = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(ClosedLoop, EquilibriumStartIsFlat) {
  const auto sc = krasov::models::hvac_default_scenario();
  auto cfg = sc.config;
  cfg.t_end = 5.0;
  cfg.x0 = cfg.x_star;
  cfg.u0 = krasov::solve_equilibrium_input(sc.model, cfg.x_star);
  const auto tr = krasov::simulate_closed_loop(sc.model, cfg);
  for (const auto& r : tr.records) {
    EXPECT_LT((r.x - cfg.x_star).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(std::abs(r.storage_residual), 1e-12);
    EXPECT_LT(std::abs(r.vd_residual), 1e-12);
  }
  EXPECT_TRUE(tr.summary.converged);
  ASSERT_TRUE(tr.summary.t_converge.has_value());
  EXPECT_EQ(*tr.summary.t_converge, 0.0);
  const auto audit = krasov::passivity_audit(tr, cfg.gains);
  EXPECT_LT(audit.worst_violation(), 1e-12);
}

TEST(ClosedLoop, DeterministicTrace) {
  const auto model = krasov::models::hvac_model();
  const auto cfg = short_hvac(1.0, 5);
  std::ostringstream a, b;
  krasov::write_trace_csv(a, krasov::simulate_closed_loop(model, cfg));
  krasov::write_trace_csv(b, krasov::simulate_closed_loop(model, cfg));
  EXPECT_EQ(a.str(), b.str());
}

TEST(ClosedLoop, TraceInvariants) {
  const auto model = krasov::models::hvac_model();
  const auto cfg = short_hvac(3.0, 7);
  const auto tr = krasov::simulate_closed_loop(model, cfg);
  ASSERT_EQ(tr.records.size(), static_cast<std::size_t>(3.0 / (1e-3 * 7)) + 1);
  for (std::size_t k = 0; k < tr.records.size(); ++k) {
    const auto& r = tr.records[k];
    EXPECT_NEAR(r.t, static_cast<double>(k) * 7e-3, 1e-12);
    EXPECT_GE(r.V, 0.0);
    EXPECT_GE(r.Vd, 0.0);
    EXPECT_TRUE(r.x.allFinite() && r.u.allFinite() && r.y.allFinite());
    // xdot is the model's vector field, not a difference quotient.
    EXPECT_LT((r.xdot - krasov::xdot(model, r.x, r.u)).norm(), 1e-12);
  }
}

TEST(ClosedLoop, ClosedLoopStorageDecreases) {
  const auto model = krasov::models::hvac_model();
  const auto tr = krasov::simulate_closed_loop(model, short_hvac(10.0, 10));
  EXPECT_LT(tr.records.back().Vd, tr.records.front().Vd);
  for (std::size_t k = 1; k < tr.records.size(); ++k) {
    EXPECT_LE(tr.records[k].Vd, tr.records[k - 1].Vd + 1e-9) << "t = " << tr.records[k].t;
  }
}

TEST(ClosedLoop, AssumptionsEnforcedUnlessWaived) {
  Matrix a = Matrix::Identity(2, 2);
  Matrix b(2, 1);
  b << 1.0, 0.0;
  const auto model = krasov::models::linear_model(
      a, b, Matrix::Identity(2, 2), krasov::Box(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)));
  krasov::SimulationConfig cfg;
  cfg.t_end = 0.01;
  cfg.x0 = Vector::Zero(2);
  cfg.x_star = Vector::Zero(2);
  EXPECT_THROW(krasov::simulate_closed_loop(model, cfg), krasov::AssumptionError);
  cfg.waive_assumptions = true;
  EXPECT_NO_THROW(krasov::simulate_closed_loop(model, cfg));
}

TEST(ClosedLoop, InfeasibleSetpointRejectedUpFront) {
  auto cfg = short_hvac(1.0);
  cfg.x_star = (Vector(4) << 2.5, 6.0, 0.0, 0.0).finished();
  EXPECT_THROW(krasov::simulate_closed_loop(krasov::models::hvac_model(), cfg), krasov::InfeasibleSetpointError);
}

TEST(ClosedLoop, SingularityMidRunReturnsPartialTrace) {
  // A violent initial cooling command drives zone 1 onto the supply temperature.
  auto cfg = short_hvac(5.0);
  cfg.x0 = (Vector(4) << -4.0, 0.0, 0.0, 0.0).finished();
  cfg.u0 = (Vector(2) << 100.0, 0.0).finished();
  try {
    krasov::simulate_closed_loop(krasov::models::hvac_model(), cfg);
    FAIL() << "expected SimulationAborted";
  } catch (const krasov::SimulationAborted& e) {
    EXPECT_GT(e.time(), 0.0);
    EXPECT_LT(e.time(), 5.0);
    EXPECT_FALSE(e.partial().records.empty());
    EXPECT_LT(e.partial().records.back().t, e.time() + 1e-12);
    EXPECT_FALSE(e.partial().summary.converged);
  }
}

TEST(Audit, CleanRunHasSecondOrderSlack) {
  const auto model = krasov::models::hvac_model();
  auto cfg = short_hvac(3.0);
  const auto coarse = krasov::passivity_audit(krasov::simulate_closed_loop(model, cfg), cfg.gains);
  cfg.dt /= 2.0;
  const auto fine = krasov::passivity_audit(krasov::simulate_closed_loop(model, cfg), cfg.gains);
  const auto tol = krasov::calibrate_tolerance(coarse, fine);
  EXPECT_TRUE(coarse.clean(tol.eps_num));
  EXPECT_GE(tol.refinement_ratio, 3.0);
  EXPECT_LE(coarse.max_vd_increase, tol.eps_num);
}

TEST(Audit, NegatedDampingIsFlagged) {
  const auto model = krasov::models::hvac_model();
  auto cfg = short_hvac(0.3);
  cfg.u0 = krasov::solve_equilibrium_input(model, cfg.x_star);
  cfg.x0 = cfg.x_star + (Vector(4) << 0.2, -0.1, 0.0, 0.0).finished();
  // Damping below -k1 makes the y^T y term of dVd/dt positive.
  cfg.gains = krasov::ControllerGains::forced(1.0, -1.1, 1.0);
  const auto coarse = krasov::passivity_audit(krasov::simulate_closed_loop(model, cfg), cfg.gains);
  cfg.dt /= 2.0;
  const auto fine = krasov::passivity_audit(krasov::simulate_closed_loop(model, cfg), cfg.gains);
  const auto tol = krasov::calibrate_tolerance(coarse, fine);
  EXPECT_GT(coarse.max_vd_increase, 100.0 * tol.eps_num);
  EXPECT_FALSE(coarse.clean(tol.eps_num));

  cfg = short_hvac(0.3);
  cfg.u0 = krasov::solve_equilibrium_input(model, cfg.x_star);
  cfg.x0 = cfg.x_star + (Vector(4) << 0.2, -0.1, 0.0, 0.0).finished();
  const auto nominal = krasov::passivity_audit(krasov::simulate_closed_loop(model, cfg), cfg.gains);
  EXPECT_EQ(nominal.max_vd_increase, 0.0);
}

TEST(Audit, NeedsThreeRecords) {
  krasov::SimulationTrace tr;
  tr.records.resize(2);
  EXPECT_THROW(krasov::passivity_audit(tr, {}), std::invalid_argument);
}

TEST(Prolonged, ZeroVariationStaysZero) {
  const auto model = krasov::models::hvac_model();
  const auto tr = krasov::simulate_prolonged(model, short_hvac(2.0, 10), Vector::Zero(4));
  for (const auto& r : tr.records) {
    EXPECT_EQ(r.dx.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(r.storage, 0.0);
  }
}

TEST(Prolonged, VariationalStorageNonIncreasing) {
  const auto model = krasov::models::hvac_model();
  const Vector dx0 = (Vector(4) << 0.1, 0.0, 0.0, 0.0).finished();
  const auto tr = krasov::simulate_prolonged(model, short_hvac(5.0), dx0);
  const auto audit = krasov::variational_audit(tr);
  EXPECT_EQ(audit.max_increase, 0.0);
  EXPECT_LT(tr.records.back().storage, tr.records.front().storage);
  EXPECT_NEAR(tr.records.front().storage, 0.5 * 0.01, 1e-15);
}

TEST(Prolonged, BaseTrajectoryMatchesClosedLoop) {
  const auto model = krasov::models::hvac_model();
  const auto cfg = short_hvac(1.0, 10);
  const auto var = krasov::simulate_prolonged(model, cfg, Vector::Ones(4));
  const auto base = krasov::simulate_closed_loop(model, cfg);
  ASSERT_EQ(var.records.size(), base.records.size());
  for (std::size_t k = 0; k < base.records.size(); ++k) {
    EXPECT_LT((var.records[k].x - base.records[k].x).norm(), 1e-12);
    EXPECT_LT((var.records[k].u - base.records[k].u).norm(), 1e-12);
  }
}

TEST(OpenLoop, UndrivenRlcStorageDecays) {
  const auto sys = krasov::models::rlc_series();
  const Vector x0 = (Vector(2) << 1.0, -0.5).finished();
  const auto tr = krasov::simulate_open_loop(sys.model, {}, {}, x0, 1e-3, 10.0);
  const double s0 = tr.records.front().V;
  for (std::size_t k = 1; k < tr.records.size(); ++k) {
    EXPECT_LE(tr.records[k].V, tr.records[k - 1].V + 1e-12 * s0);
  }
  EXPECT_NEAR(s0, sys.storage(x0, Vector::Zero(1)), 1e-14);
}

TEST(Csv, HeaderAndPrecision) {
  const auto model = krasov::models::hvac_model();
  const auto tr = krasov::simulate_closed_loop(model, short_hvac(0.1, 10));
  std::ostringstream os;
  krasov::write_trace_csv(os, tr);
  std::istringstream in(os.str());
  std::string header, row;
  std::getline(in, header);
  EXPECT_EQ(header, "t,x1,x2,x3,x4,u1,u2,y1,y2,vdot1,vdot2,V,Vd,storage_residual,vd_residual");
  int rows = 0;
  while (std::getline(in, row)) {
    ++rows;
    EXPECT_EQ(std::count(row.begin(), row.end(), ','), 14);
  }
  EXPECT_EQ(rows, 11);
  // Full round trip of a logged value.
  std::istringstream second(os.str());
  std::getline(second, header);
  std::getline(second, row);
  std::getline(second, row);
  const double x1 = std::stod(row.substr(row.find(',') + 1));
  EXPECT_EQ(x1, tr.records[1].x(0));
}

TEST(Csv, VariationalHeader) {
  const auto model = krasov::models::hvac_model();
  const auto tr = krasov::simulate_prolonged(model, short_hvac(0.05, 10), Vector::Zero(4));
  std::ostringstream os;
  krasov::write_variational_csv(os, tr);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
            "t,x1,x2,x3,x4,u1,u2,dx1,dx2,dx3,dx4,du1,du2,dy1,dy2,dv1,dv2,dstorage,dstorage_residual");
}

TEST(Decimate, KeepsEveryStrideRecord) {
  const auto model = krasov::models::hvac_model();
  const auto full = krasov::simulate_closed_loop(model, short_hvac(0.2, 1));
  const auto thin = krasov::decimate(full, 10);
  const auto direct = krasov::simulate_closed_loop(model, short_hvac(0.2, 10));
  ASSERT_EQ(thin.records.size(), direct.records.size());
  EXPECT_EQ(thin.log_stride, 10);
  for (std::size_t k = 0; k < thin.records.size(); ++k) EXPECT_EQ(thin.records[k].x, direct.records[k].x);
}
