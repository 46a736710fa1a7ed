#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "krasov/assumptions.hpp"
#include "krasov/control.hpp"
#include "krasov/models.hpp"
#include "oracles.hpp"

using krasov::Box;
using krasov::ControlAffineModel;
using krasov::Matrix;
using krasov::ModelDefinition;
using krasov::Vector;

namespace {

Box square(int n, double half) { return Box(Vector::Constant(n, -half), Vector::Constant(n, half)); }

ControlAffineModel make(krasov::DriftFn f, krasov::InputMatrixFn g, int n, int m,
                        Matrix metric = Matrix()) {
  ModelDefinition def;
  def.name = "toy";
  def.n = n;
  def.m = m;
  def.drift = std::move(f);
  def.input_matrix = std::move(g);
  def.metric = metric.size() ? metric : Matrix::Identity(n, n);
  def.state_domain = square(n, 2.0);
  return ControlAffineModel(std::move(def));
}

Matrix e1(int n) {
  Matrix g = Matrix::Zero(n, 1);
  g(0, 0) = 1.0;
  return g;
}

Matrix random_matrix(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> nd;
  return Matrix::NullaryExpr(r, c, [&] { return nd(rng); });
}

}  // namespace

TEST(CheckA1, ContractionPassesWithMinusTwo) {
  auto model = make([](const Vector& x) { return Vector(-x); }, [](const Vector&) { return e1(2); }, 2, 1);
  const auto r = krasov::check_a1(model, 50, 0.0);
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.worst, -2.0, 1e-8);
}

TEST(CheckA1, ExpansionFailsWithPlusTwo) {
  auto model = make([](const Vector& x) { return Vector(x); }, [](const Vector&) { return e1(2); }, 2, 1);
  const auto r = krasov::check_a1(model, 50, 0.0);
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(r.worst, 2.0, 1e-8);
}

TEST(CheckA1, HvacWorstEigenvalueMatchesConductanceOracle) {
  const oracle::Hvac o;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(-2.0 * o.conductance());
  const double expected = es.eigenvalues().maxCoeff();
  const auto r = krasov::check_a1(krasov::models::hvac_model(), 1000, 0.0);
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.worst, expected, 1e-8);
  EXPECT_NEAR(expected, -(3.0 - std::sqrt(5.0)), 1e-12);
}

TEST(CheckA1, MarginTightensVerdict) {
  auto model = make([](const Vector& x) { return Vector(-x); }, [](const Vector&) { return e1(2); }, 2, 1);
  EXPECT_TRUE(krasov::check_a1(model, 10, 1.9).pass);
  EXPECT_FALSE(krasov::check_a1(model, 10, 2.0).pass);
}

TEST(CheckA1, VerdictInvariantUnderMetricScaling) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(rng, 3, 3) - (trial % 2 ? 0.0 : 3.0) * Matrix::Identity(3, 3);
    const Matrix r = random_matrix(rng, 3, 3);
    const Matrix metric = r * r.transpose() + 0.5 * Matrix::Identity(3, 3);
    const Box box = square(3, 1.0);
    const Matrix b = e1(3);
    const bool base = krasov::check_a1(krasov::models::linear_model(a, b, metric, box), 5, 0.0).pass;
    for (double c : {1e-3, 0.5, 7.0, 1e4}) {
      const auto scaled = krasov::models::linear_model(a, b, c * metric, box);
      EXPECT_EQ(krasov::check_a1(scaled, 5, 0.0).pass, base) << "trial " << trial << " c " << c;
    }
  }
}

TEST(Annihilator, CoordinateAxis) {
  Matrix g(2, 1);
  g << 1.0, 0.0;
  const Matrix gp = krasov::annihilator(g);
  ASSERT_EQ(gp.rows(), 1);
  ASSERT_EQ(gp.cols(), 2);
  EXPECT_NEAR(gp(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(gp(0, 1)), 1.0, 1e-15);
}

TEST(Annihilator, HvacSpansWallCoordinates) {
  const auto model = krasov::models::hvac_model();
  for (const Vector& x : model.state_domain().sample(20, 2)) {
    const Matrix gp = krasov::annihilator(model.input_matrix(x));
    ASSERT_EQ(gp.rows(), 2);
    EXPECT_LT(gp.leftCols(2).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((gp.rightCols(2) * gp.rightCols(2).transpose() - Matrix::Identity(2, 2)).norm(), 1e-12);
  }
}

TEST(Annihilator, RandomFullRankMatricesProperty) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 6;
    const int m = 1 + trial % (n - 1);
    const Matrix g = random_matrix(rng, n, m);
    const Matrix gp = krasov::annihilator(g);
    ASSERT_EQ(gp.rows(), n - m);
    EXPECT_LT((gp * g).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((gp * gp.transpose() - Matrix::Identity(n - m, n - m)).cwiseAbs().maxCoeff(), 1e-12);
    // Rows span the left null space: gp^T gp is the complementary projector.
    const Matrix proj = Matrix::Identity(n, n) - g * (g.transpose() * g).inverse() * g.transpose();
    EXPECT_LT((gp.transpose() * gp - proj).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Annihilator, RankDeficientThrows) {
  Matrix g(3, 2);
  g << 1.0, 2.0, 2.0, 4.0, 3.0, 6.0;
  EXPECT_THROW(krasov::annihilator(g), krasov::SingularityError);
}

TEST(CheckA2, ConstantInputMatrixExactZero) {
  auto model = make([](const Vector& x) { return Vector(-x); },
                    [](const Vector&) { return Matrix((Matrix(3, 1) << 1.0, 2.0, 0.5).finished()); }, 3, 1);
  const auto r = krasov::check_a2(model, 30, 8);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.worst, 0.0);
}

TEST(CheckA2, HvacPasses) {
  const auto r = krasov::check_a2(krasov::models::hvac_model(), 200, 8);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.worst, 1e-12);
}

TEST(CheckA2, Sheared2x1Fails) {
  auto model = make([](const Vector& x) { return Vector(-x); },
                    [](const Vector& x) { return Matrix((Matrix(2, 1) << 1.0, x(0)).finished()); }, 2, 1);
  const auto r = krasov::check_a2(model, 50, 8);
  EXPECT_FALSE(r.pass);
  // g_perp = (-x1, 1)/sqrt(1 + x1^2) and dg.w = (0, w1): residual |w1| / sqrt(1 + x1^2).
  const double bound = 1.0;
  EXPECT_GT(r.worst, 0.1);
  EXPECT_LE(r.worst, bound + 1e-9);
  const double x1 = r.at(0);
  EXPECT_LE(r.worst, 1.0 / std::sqrt(1.0 + x1 * x1) + 1e-8);
}

TEST(CheckA3, ConstantFieldHasZeroAsymmetry) {
  auto model = make([](const Vector& x) { return Vector(-x); },
                    [](const Vector&) { return Matrix((Matrix(2, 1) << 1.0, 3.0).finished()); }, 2, 1);
  const auto r = krasov::check_a3(model, 20);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.worst, 0.0);
}

TEST(CheckA3, HvacPasses) {
  const auto r = krasov::check_a3(krasov::models::hvac_model(), 200);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(r.worst, 1e-12);
}

TEST(CheckA3, RotationFieldFailsWithAsymmetryTwo) {
  auto model = make([](const Vector& x) { return Vector(-x); },
                    [](const Vector& x) { return Matrix((Matrix(3, 1) << -x(1), x(0), 1.0).finished()); }, 3, 1);
  const auto r = krasov::check_a3(model, 20);
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(r.worst, 2.0, 1e-6);
}

TEST(CheckAll, ExpandingDriftFailsOnlyA1) {
  auto model = make([](const Vector& x) { return Vector(x); }, [](const Vector&) { return e1(2); }, 2, 1);
  krasov::AssumptionConfig cfg;
  cfg.samples = 100;
  const auto rep = krasov::check_all(model, cfg);
  EXPECT_FALSE(rep.a1.pass);
  EXPECT_TRUE(rep.a2.pass);
  EXPECT_TRUE(rep.a3.pass);
  EXPECT_FALSE(rep.any_error());
}

TEST(CheckAll, RlcConstantSourceMatrixExactZeros) {
  const auto sys = krasov::models::rlc_two_mesh();
  const auto rep = krasov::check_all(sys.model);
  EXPECT_TRUE(rep.all_pass());
  EXPECT_EQ(rep.a2.worst, 0.0);
  EXPECT_EQ(rep.a3.worst, 0.0);
}

TEST(CheckAll, HvacAllPassAndDeterministic) {
  const auto model = krasov::models::hvac_model();
  const auto r1 = krasov::check_all(model);
  const auto r2 = krasov::check_all(model);
  EXPECT_TRUE(r1.all_pass());
  EXPECT_EQ(krasov::to_json(r1).dump(), krasov::to_json(r2).dump());
  krasov::AssumptionConfig other;
  other.seed = 99;
  EXPECT_NE(krasov::to_json(krasov::check_all(model, other))["a1"]["at"],
            krasov::to_json(r1)["a1"]["at"]);
}

TEST(CheckAll, ErrorsAreRecordedWithoutAbortingOtherChecks) {
  // g vanishes on the whole box: A2 cannot build an annihilator.
  auto model = make([](const Vector& x) { return Vector(-x); },
                    [](const Vector&) { return Matrix(Matrix::Zero(2, 1)); }, 2, 1);
  krasov::AssumptionConfig cfg;
  cfg.samples = 20;
  const auto rep = krasov::check_all(model, cfg);
  EXPECT_TRUE(rep.a1.pass);
  ASSERT_TRUE(rep.a2.error.has_value());
  EXPECT_FALSE(rep.a2.pass);
  EXPECT_TRUE(rep.a3.pass);
  const auto j = krasov::to_json(rep);
  EXPECT_TRUE(j["a2"].contains("error"));
}

TEST(CheckAll, JsonShape) {
  krasov::AssumptionConfig cfg;
  cfg.samples = 10;
  const auto j = krasov::to_json(krasov::check_all(krasov::models::hvac_model(), cfg));
  for (const char* k : {"a1", "a2", "a3", "seed", "samples"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_TRUE(j["a1"].contains("worst_eig"));
  EXPECT_TRUE(j["a2"].contains("worst_residual"));
  EXPECT_TRUE(j["a3"].contains("worst_asymmetry"));
  EXPECT_EQ(j["samples"], 10);
}

TEST(CheckA3, PassImpliesPathIndependence) {
  const auto model = krasov::models::hvac_model();
  ASSERT_TRUE(krasov::check_a3(model, 100).pass);
  const Box& box = model.state_domain();
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pts = box.sample(4, 1000 + trial);
    const Vector a = krasov::line_integral(model, {pts[0], pts[1], pts[3]});
    const Vector b = krasov::line_integral(model, {pts[0], pts[2], pts[3]});
    EXPECT_LT((a - b).norm(), 1e-6 * std::max(1.0, a.norm())) << "trial " << trial;
  }
}
