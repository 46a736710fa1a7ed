#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "krasov/system.hpp"

namespace krasov {

/// Sampling and tolerance knobs shared by the A1/A2/A3 checks.
struct AssumptionConfig {
  int samples = 1000;
  int probes = 8;
  double tolerance = 1e-8;
  double margin_a1 = 0.0;
  std::uint64_t seed = 20240101;
};

/// Outcome of one sampled check. `worst` is the largest eigenvalue (A1),
/// residual (A2) or asymmetry (A3) seen; `at` is the sample attaining it.
struct CheckResult {
  bool pass = false;
  double worst = 0.0;
  Vector at;
  std::optional<std::string> error;
};

struct AssumptionReport {
  CheckResult a1;
  CheckResult a2;
  CheckResult a3;
  std::uint64_t seed = 0;
  int samples = 0;
  Box domain;

  bool all_pass() const { return a1.pass && a2.pass && a3.pass; }
  bool any_error() const { return a1.error || a2.error || a3.error; }
};

/// Orthonormal basis (rows) of the left null space of g: g_perp * g = 0.
/// Throws SingularityError when g does not have full column rank.
Matrix annihilator(const Matrix& g);

/// Symmetrized drift Jacobian M df/dx + df/dx^T M at x.
Matrix symmetrized_drift_jacobian(const ControlAffineModel& model, const Vector& x);

CheckResult check_a1(const ControlAffineModel& model, const std::vector<Vector>& samples,
                     double margin);
CheckResult check_a1(const ControlAffineModel& model, int samples, double margin,
                     std::uint64_t seed = AssumptionConfig{}.seed);

CheckResult check_a2(const ControlAffineModel& model, const std::vector<Vector>& samples,
                     int probes, double tolerance, std::uint64_t seed);
CheckResult check_a2(const ControlAffineModel& model, int samples, int probes,
                     double tolerance = AssumptionConfig{}.tolerance,
                     std::uint64_t seed = AssumptionConfig{}.seed);

/// Largest |J - J^T| over the Jacobians of the columns of M g at x.
double mg_asymmetry(const ControlAffineModel& model, const Vector& x);

CheckResult check_a3(const ControlAffineModel& model, const std::vector<Vector>& samples,
                     double tolerance);
CheckResult check_a3(const ControlAffineModel& model, int samples,
                     double tolerance = AssumptionConfig{}.tolerance,
                     std::uint64_t seed = AssumptionConfig{}.seed);

/// Runs all three checks on one shared sample set. A failure inside one check
/// is recorded in its `error` field; the others still run.
AssumptionReport check_all(const ControlAffineModel& model, const AssumptionConfig& config = {});

nlohmann::json to_json(const AssumptionReport& report);

}  // namespace krasov
