#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "krasov/assumptions.hpp"
#include "krasov/simulator.hpp"
#include "krasov/system.hpp"

namespace krasov {

/// Scenario file rejected; carries the offending line (0 if unknown) and the
/// dotted field path.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string field, int line)
      : Error(what), field_(std::move(field)), line_(line) {}

  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

/// A fully resolved scenario: model, run configuration, check settings and
/// output locations.
///
/// File layout (TOML):
///
///     model = "hvac2z"          # hvac2z | rlc-series | rlc-2mesh | linear
///     seed = 7
///     [params]      model parameter overrides
///     [domain]      lower = [...], upper = [...]
///     [gains]       k1, kd, ki
///     [setpoint]    x = [...]   (hvac2z also accepts zones = [T1, T2])
///     [initial]     x = [...], u = [...]
///     [simulation]  dt, t_end, log_stride, band, waive_assumptions
///     [check]       samples, probes, tolerance, margin
///     [variational] dx0 = [...], dv_amplitude, dv_frequency
///     [output]      dir, report, trace, summary, variational
///
/// Unknown keys are errors.
struct Scenario {
  std::string name;
  std::string model_kind;
  nlohmann::json resolved_params;
  std::shared_ptr<const ControlAffineModel> model;
  SimulationConfig simulation;
  /// False when neither the file nor the model supplies a target state.
  bool has_setpoint = false;
  AssumptionConfig check;
  Vector dx0;
  double dv_amplitude = 0.0;
  double dv_frequency = 1.0;

  std::filesystem::path out_dir = ".";
  std::string report_file;
  std::string trace_file;
  std::string summary_file;
  std::string variational_file;

  /// Sinusoidal dv(t) = amplitude sin(2 pi frequency t) on every channel, or
  /// an empty function when the amplitude is zero.
  SignalFn variation_input() const;
};

struct ScenarioOverrides {
  std::optional<double> dt;
  std::optional<double> t_end;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
};

/// Parses scenario text; `name` labels diagnostics and default output files.
Scenario parse_scenario(std::string_view text, const std::string& name = "scenario");
Scenario load_scenario(const std::filesystem::path& path);

void apply_overrides(Scenario& scenario, const ScenarioOverrides& overrides);

}  // namespace krasov
