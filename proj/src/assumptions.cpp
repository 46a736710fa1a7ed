#include "krasov/assumptions.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace krasov {

namespace {

// Relative singular-value floor below which g is treated as rank deficient.
constexpr double kRankTolerance = 1e-12;

std::vector<Vector> unit_directions(int n, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> dirs;
  dirs.reserve(static_cast<std::size_t>(count));
  while (static_cast<int>(dirs.size()) < count) {
    Vector w(n);
    for (int i = 0; i < n; ++i) w[i] = normal(rng);
    const double norm = w.norm();
    if (norm > 1e-8) dirs.push_back(w / norm);
  }
  return dirs;
}

std::string describe(const Vector& x) {
  std::ostringstream os;
  os << "[";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << "]";
  return os.str();
}

nlohmann::json vec_json(const Vector& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

nlohmann::json check_json(const CheckResult& r, const char* worst_key) {
  nlohmann::json j;
  j["pass"] = r.pass;
  j[worst_key] = std::isfinite(r.worst) ? nlohmann::json(r.worst) : nlohmann::json(nullptr);
  j["at"] = r.at.size() ? vec_json(r.at) : nlohmann::json(nullptr);
  if (r.error) j["error"] = *r.error;
  return j;
}

}  // namespace

Matrix annihilator(const Matrix& g) {
  const auto n = g.rows();
  const auto m = g.cols();
  if (m == 0 || m >= n) throw std::invalid_argument("annihilator: need 0 < m < n");
  Eigen::JacobiSVD<Matrix> svd(g, Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  if (!(sv[0] > 0.0) || sv[m - 1] <= kRankTolerance * sv[0]) {
    throw SingularityError("annihilator: input matrix is not full column rank", Vector());
  }
  return svd.matrixU().rightCols(n - m).transpose();
}

Matrix symmetrized_drift_jacobian(const ControlAffineModel& model, const Vector& x) {
  const Matrix j = model.drift_jacobian(x);
  const Matrix& m = model.M();
  return m * j + j.transpose() * m;
}

CheckResult check_a1(const ControlAffineModel& model, const std::vector<Vector>& samples,
                     double margin) {
  if (samples.empty()) throw std::invalid_argument("check_a1: need at least one sample");
  if (margin < 0.0) throw std::invalid_argument("check_a1: margin must be >= 0");
  CheckResult r;
  r.worst = -std::numeric_limits<double>::infinity();
  for (const auto& x : samples) {
    Matrix s;
    try {
      s = symmetrized_drift_jacobian(model, x);
    } catch (const EvaluationError& e) {
      throw EvaluationError(std::string(e.what()) + " at sample " + describe(x), e.coordinate());
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().maxCoeff();
    if (top > r.worst) {
      r.worst = top;
      r.at = x;
    }
  }
  r.pass = r.worst < -margin;
  return r;
}

CheckResult check_a1(const ControlAffineModel& model, int samples, double margin,
                     std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("check_a1: need at least one sample");
  return check_a1(model, model.state_domain().sample(samples, seed), margin);
}

CheckResult check_a2(const ControlAffineModel& model, const std::vector<Vector>& samples,
                     int probes, double tolerance, std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("check_a2: need at least one sample");
  if (probes < 1) throw std::invalid_argument("check_a2: need at least one probe");
  const auto dirs = unit_directions(model.state_dim(), probes, seed);
  CheckResult r;
  r.worst = 0.0;
  r.at = samples.front();
  for (const auto& x : samples) {
    Matrix perp;
    try {
      perp = annihilator(model.input_matrix(x));
    } catch (const SingularityError&) {
      throw SingularityError("check_a2: input matrix rank deficient at sample " + describe(x), x);
    }
    for (const auto& w : dirs) {
      const double res = (perp * model.input_matrix_directional(x, w)).cwiseAbs().maxCoeff();
      if (res > r.worst) {
        r.worst = res;
        r.at = x;
      }
    }
  }
  r.pass = r.worst < tolerance;
  return r;
}

CheckResult check_a2(const ControlAffineModel& model, int samples, int probes, double tolerance,
                     std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("check_a2: need at least one sample");
  return check_a2(model, model.state_domain().sample(samples, seed), probes, tolerance, seed);
}

double mg_asymmetry(const ControlAffineModel& model, const Vector& x) {
  const int n = model.state_dim();
  const int m = model.input_dim();
  const Matrix& metric = model.M();
  // Column k of d(M g e_j)/dx is M (dg/dx . e_k) e_j.
  std::vector<Matrix> jac(static_cast<std::size_t>(m), Matrix(n, n));
  for (int k = 0; k < n; ++k) {
    const Matrix dk = metric * model.input_matrix_directional(x, Vector::Unit(n, k));
    for (int j = 0; j < m; ++j) jac[static_cast<std::size_t>(j)].col(k) = dk.col(j);
  }
  double worst = 0.0;
  for (const auto& jj : jac) worst = std::max(worst, (jj - jj.transpose()).cwiseAbs().maxCoeff());
  return worst;
}

CheckResult check_a3(const ControlAffineModel& model, const std::vector<Vector>& samples,
                     double tolerance) {
  if (samples.empty()) throw std::invalid_argument("check_a3: need at least one sample");
  CheckResult r;
  r.worst = 0.0;
  r.at = samples.front();
  for (const auto& x : samples) {
    const double a = mg_asymmetry(model, x);
    if (a > r.worst) {
      r.worst = a;
      r.at = x;
    }
  }
  r.pass = r.worst < tolerance;
  return r;
}

CheckResult check_a3(const ControlAffineModel& model, int samples, double tolerance,
                     std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("check_a3: need at least one sample");
  return check_a3(model, model.state_domain().sample(samples, seed), tolerance);
}

AssumptionReport check_all(const ControlAffineModel& model, const AssumptionConfig& config) {
  if (config.samples < 1) throw std::invalid_argument("check_all: need at least one sample");
  AssumptionReport report;
  report.seed = config.seed;
  report.samples = config.samples;
  report.domain = model.state_domain();
  const auto samples = model.state_domain().sample(config.samples, config.seed);

  auto guarded = [](CheckResult& slot, auto&& run) {
    try {
      slot = run();
    } catch (const std::exception& e) {
      slot = CheckResult{};
      slot.pass = false;
      slot.worst = std::numeric_limits<double>::quiet_NaN();
      slot.error = e.what();
    }
  };
  guarded(report.a1, [&] { return check_a1(model, samples, config.margin_a1); });
  guarded(report.a2, [&] {
    return check_a2(model, samples, config.probes, config.tolerance, config.seed);
  });
  guarded(report.a3, [&] { return check_a3(model, samples, config.tolerance); });
  return report;
}

nlohmann::json to_json(const AssumptionReport& report) {
  nlohmann::json j;
  j["a1"] = check_json(report.a1, "worst_eig");
  j["a2"] = check_json(report.a2, "worst_residual");
  j["a3"] = check_json(report.a3, "worst_asymmetry");
  j["seed"] = report.seed;
  j["samples"] = report.samples;
  if (report.domain.dim() > 0) {
    j["domain"] = {{"lower", vec_json(report.domain.lower)},
                   {"upper", vec_json(report.domain.upper)}};
  }
  return j;
}

}  // namespace krasov
