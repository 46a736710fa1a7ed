#include <cmath>

#include <gtest/gtest.h>

#include "krasov/assumptions.hpp"
#include "krasov/control.hpp"
#include "krasov/models.hpp"
#include "oracles.hpp"

using krasov::Matrix;
using krasov::Vector;
namespace models = krasov::models;

TEST(Hvac, ParamsValidation) {
  models::HvacTwoZoneParams p;
  EXPECT_NO_THROW(p.validate());
  p.C3 = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.R34 = -1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.Ts = 5.0;  // inside the operating band
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Hvac, ShapeMetricAndDomain) {
  const auto model = models::hvac_model();
  EXPECT_EQ(model.state_dim(), 4);
  EXPECT_EQ(model.input_dim(), 2);
  EXPECT_EQ(model.M(), Matrix(Eigen::Vector4d(1.0, 1.0, 2.0, 2.0).asDiagonal()));
  EXPECT_FALSE(model.state_domain().contains(Vector::Constant(4, -10.0)));
}

TEST(Hvac, DriftJacobianWallRow) {
  models::HvacTwoZoneParams p;
  p.C3 = 2.5;
  p.R31 = 0.8;
  p.R34 = 1.6;
  const auto model = models::hvac_model(p);
  const Matrix j = model.drift_jacobian(Vector::Ones(4));
  EXPECT_NEAR(j(2, 0), 1.0 / (2.5 * 0.8), 1e-15);
  EXPECT_EQ(j(2, 1), 0.0);
  EXPECT_NEAR(j(2, 2), -1.0 / (2.5 * 0.8) - 1.0 / (2.5 * 1.6), 1e-15);
  EXPECT_NEAR(j(2, 3), 1.0 / (2.5 * 1.6), 1e-15);
}

TEST(Hvac, ConductanceMatchesHandAssembly) {
  const oracle::Hvac o;
  EXPECT_LT((models::hvac_conductance({}) - Matrix(o.conductance())).norm(), 1e-15);
}

TEST(Hvac, SymmetrizedDriftIsMinusTwiceConductance) {
  const oracle::Hvac o;
  const auto model = models::hvac_model();
  for (const Vector& x : model.state_domain().sample(20, 3)) {
    const Matrix s = krasov::symmetrized_drift_jacobian(model, x);
    EXPECT_LT((s + 2.0 * Matrix(o.conductance())).norm(), 1e-12);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(-2.0 * o.conductance());
  EXPECT_LT(es.eigenvalues().maxCoeff(), 0.0);
}

TEST(Hvac, ClosedFormPotentialGradient) {
  const auto model = models::hvac_model();
  const double h = 1e-5;
  for (const Vector& x : model.state_domain().sample(50, 8)) {
    const Matrix mg = model.M() * model.input_matrix(x);
    for (int k = 0; k < 4; ++k) {
      const Vector e = Vector::Unit(4, k) * h;
      // Gamma is quadratic, so the central difference is exact up to round-off.
      const Vector d = (*model.closed_form_potential(x + e) - *model.closed_form_potential(x - e)) / (2 * h);
      EXPECT_LT((d.transpose() - mg.row(k)).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Hvac, AllAssumptionsHold) {
  EXPECT_TRUE(krasov::check_all(models::hvac_model()).all_pass());
}

TEST(Hvac, DefaultScenario) {
  const auto a = models::hvac_default_scenario();
  const auto b = models::hvac_default_scenario();
  EXPECT_EQ(a.config.x_star, b.config.x_star);
  EXPECT_EQ(a.config.x0, b.config.x0);
  EXPECT_NEAR(a.config.x_star(0), 2.5, 0.0);
  EXPECT_NEAR(a.config.x_star(1), 6.0, 0.0);
  EXPECT_NO_THROW(krasov::solve_equilibrium_input(a.model, a.config.x_star));
  // Zone 2 starts further from its target.
  EXPECT_GT(std::abs(a.config.x_star(1) - a.config.x0(1)), std::abs(a.config.x_star(0) - a.config.x0(0)));
  EXPECT_EQ(a.config.dt, 1e-3);
  EXPECT_EQ(a.config.t_end, 40.0);
}

TEST(Rlc, SeriesEquilibriumAtSourceVoltage) {
  const auto sys = models::rlc_series();
  const Vector vs = Vector::Constant(1, 1.7);
  const Vector x = (Vector(2) << 0.0, 1.7).finished();
  EXPECT_LT(krasov::xdot(sys.model, x, vs).norm(), 1e-12);
  EXPECT_LT(sys.rates(x, vs).norm(), 1e-12);
  const Vector found = krasov::equilibrium_state_for_input(sys.model, vs);
  EXPECT_LT((found - x).norm(), 1e-12);
}

TEST(Rlc, SeriesHandDynamics) {
  // L di/dt = Vs - R i - v, C dv/dt = i.
  const models::RlcSeriesParams p{2.0, 0.5, 0.3};
  const auto sys = models::rlc_series(p);
  const Vector x = (Vector(2) << 0.4, -1.2).finished();
  const Vector vs = Vector::Constant(1, 0.9);
  const Vector d = krasov::xdot(sys.model, x, vs);
  EXPECT_NEAR(d(0), (0.9 - 0.3 * 0.4 + 1.2) / 2.0, 1e-14);
  EXPECT_NEAR(d(1), 0.4 / 0.5, 1e-14);
  EXPECT_LT((sys.rates(x, vs) - d).norm(), 1e-14);
}

TEST(Rlc, StorageIsKrasovskiiForm) {
  const auto sys = models::rlc_two_mesh();
  const Vector vs = Vector::Constant(1, 0.6);
  for (const Vector& x : sys.model.state_domain().sample(20, 5)) {
    const Vector xd = krasov::xdot(sys.model, x, vs);
    EXPECT_NEAR(sys.storage(x, vs), 0.5 * xd.dot(sys.model.M() * xd), 1e-12);
    // The port output is the source-current rate.
    EXPECT_NEAR(krasov::output_y(sys.model, x, xd)(0), xd(0), 1e-12);
  }
}

TEST(Rlc, MixedPotentialGradientMatchesDifferences) {
  const auto sys = models::rlc_two_mesh();
  const double h = 1e-6;
  for (const Vector& x : sys.model.state_domain().sample(10, 6)) {
    const Vector grad = sys.mixed_potential_gradient(x);
    for (int k = 0; k < 4; ++k) {
      const Vector e = Vector::Unit(4, k) * h;
      EXPECT_NEAR((sys.mixed_potential(x + e) - sys.mixed_potential(x - e)) / (2 * h), grad(k), 1e-8);
    }
  }
}

TEST(Rlc, AssumptionVerdicts) {
  const auto series = krasov::check_all(models::rlc_series().model);
  // Only one resistor: the capacitor direction is marginal.
  EXPECT_FALSE(series.a1.pass);
  EXPECT_NEAR(series.a1.worst, 0.0, 1e-12);
  EXPECT_TRUE(series.a2.pass);
  EXPECT_TRUE(series.a3.pass);
  EXPECT_TRUE(krasov::check_all(models::rlc_two_mesh().model).all_pass());
}

TEST(Rlc, RejectsBadParameters) {
  EXPECT_ANY_THROW(models::rlc_series({0.0, 1.0, 0.5}));
  EXPECT_ANY_THROW(models::rlc_series({1.0, -1.0, 0.5}));
}

TEST(Linear, PotentialIsTransposedInputMap) {
  Matrix a = -Matrix::Identity(3, 3);
  Matrix b(3, 1);
  b << 1.0, 2.0, 3.0;
  Matrix metric = Vector::LinSpaced(3, 1.0, 3.0).asDiagonal();
  const auto model = models::linear_model(a, b, metric, krasov::Box(Vector::Constant(3, -1.0), Vector::Constant(3, 1.0)));
  const Vector x = (Vector(3) << 0.1, 0.2, -0.3).finished();
  EXPECT_NEAR((*model.closed_form_potential(x))(0), (metric * b).col(0).dot(x), 1e-15);
  EXPECT_ANY_THROW(models::linear_model(a, b, Matrix::Identity(2, 2), krasov::Box(Vector::Zero(3), Vector::Ones(3))));
}
