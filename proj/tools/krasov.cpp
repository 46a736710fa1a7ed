// krasov: batch front-end for assumption checks, closed-loop simulation and
// variational (prolonged system) runs driven by scenario files.
//
// Exit codes: 0 ok, 1 check/convergence/audit failure, 2 scenario parse
// error, 3 evaluation error, 4 infeasible setpoint, 5 run aborted mid-way.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "krasov/assumptions.hpp"
#include "krasov/scenario.hpp"
#include "krasov/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailed = 1,
  kParse = 2,
  kEvaluation = 3,
  kInfeasible = 4,
  kAborted = 5,
};

std::mutex g_stdout_mutex;

void emit(const std::string& line) {
  std::lock_guard<std::mutex> lock(g_stdout_mutex);
  std::cout << line << std::endl;
}

json vec_json(const krasov::Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

fs::path output_path(const krasov::Scenario& sc, const std::string& file) {
  fs::create_directories(sc.out_dir);
  return sc.out_dir / file;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

json scenario_json(const krasov::Scenario& sc) {
  return {{"name", sc.name},
          {"model", sc.model_kind},
          {"params", sc.resolved_params},
          {"gains",
           {{"k1", sc.simulation.gains.k1()},
            {"kd", sc.simulation.gains.kd()},
            {"ki", sc.simulation.gains.ki()}}},
          {"dt", sc.simulation.dt},
          {"t_end", sc.simulation.t_end},
          {"log_stride", sc.simulation.log_stride},
          {"seed", sc.check.seed}};
}

struct Options {
  std::vector<std::string> scenarios;
  krasov::ScenarioOverrides overrides;
  std::string dx0;
};

krasov::Scenario load(const std::string& path, const Options& opts) {
  krasov::Scenario sc = krasov::load_scenario(path);
  krasov::apply_overrides(sc, opts.overrides);
  return sc;
}

/// Maps library exceptions onto exit codes; `body` does the actual work.
template <typename Fn>
int guarded(const std::string& path, Fn&& body) {
  try {
    return body();
  } catch (const krasov::ParseError& e) {
    spdlog::error("{}: {}", path, e.what());
    emit(path + ": parse error: " + e.what());
    return kParse;
  } catch (const krasov::InfeasibleSetpointError& e) {
    spdlog::error("{}: {}", path, e.what());
    emit(path + ": infeasible setpoint (residual " + std::to_string(e.residual()) + ")");
    return kInfeasible;
  } catch (const krasov::AssumptionError& e) {
    spdlog::error("{}: {}", path, e.what());
    emit(path + ": assumptions not satisfied");
    return kFailed;
  } catch (const krasov::SingularityError& e) {
    spdlog::error("{}: {}", path, e.what());
    emit(path + ": aborted: " + e.what());
    return kAborted;
  } catch (const krasov::IntegrationError& e) {
    spdlog::error("{}: {}", path, e.what());
    emit(path + ": aborted: " + e.what());
    return kAborted;
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", path, e.what());
    emit(path + ": evaluation error: " + e.what());
    return kEvaluation;
  }
}

int run_check(const std::string& path, const Options& opts) {
  return guarded(path, [&] {
    const krasov::Scenario sc = load(path, opts);
    spdlog::info("{}: checking A1-A3 on {} samples (seed {})", path, sc.check.samples, sc.check.seed);
    const auto report = krasov::check_all(*sc.model, sc.check);
    json j = krasov::to_json(report);
    j["scenario"] = scenario_json(sc);
    const fs::path out = output_path(sc, sc.report_file);
    write_json(out, j);
    std::ostringstream line;
    line << path << ": a1=" << (report.a1.pass ? "pass" : "fail")
         << " a2=" << (report.a2.pass ? "pass" : "fail")
         << " a3=" << (report.a3.pass ? "pass" : "fail") << " -> " << out.string();
    emit(line.str());
    if (report.any_error()) return int{kEvaluation};
    return report.all_pass() ? int{kOk} : int{kFailed};
  });
}

// Audits difference the storage on the integration grid; the configured
// stride only thins what gets written.
krasov::SimulationConfig full_grid(const krasov::SimulationConfig& cfg) {
  krasov::SimulationConfig full = cfg;
  full.log_stride = 1;
  return full;
}

krasov::SimulationConfig halved(const krasov::SimulationConfig& cfg) {
  krasov::SimulationConfig fine = full_grid(cfg);
  fine.dt = cfg.dt / 2.0;
  // Assumptions were already verified on the coarse run.
  fine.waive_assumptions = true;
  return fine;
}

int run_simulate(const std::string& path, const Options& opts) {
  return guarded(path, [&] {
    const krasov::Scenario sc = load(path, opts);
    if (!sc.has_setpoint) {
      throw krasov::ParseError("setpoint.x: required for simulate", "setpoint.x", 0);
    }
    const fs::path trace_path = output_path(sc, sc.trace_file);
    krasov::SimulationTrace trace;
    try {
      trace = krasov::simulate_closed_loop(*sc.model, full_grid(sc.simulation));
    } catch (const krasov::SimulationAborted& e) {
      std::ofstream csv(trace_path);
      krasov::write_trace_csv(csv, krasov::decimate(e.partial(), sc.simulation.log_stride));
      spdlog::error("{}: {}", path, e.what());
      emit(path + ": aborted at t = " + std::to_string(e.time()) + ", partial trace -> " +
           trace_path.string());
      return int{kAborted};
    }
    {
      std::ofstream csv(trace_path);
      krasov::write_trace_csv(csv, krasov::decimate(trace, sc.simulation.log_stride));
    }

    const auto fine = krasov::simulate_closed_loop(*sc.model, halved(sc.simulation));
    const auto audit = krasov::passivity_audit(trace, sc.simulation.gains);
    const auto audit_fine = krasov::passivity_audit(fine, sc.simulation.gains);
    const auto tol = krasov::calibrate_tolerance(audit, audit_fine);
    const bool clean = audit.clean(tol.eps_num);
    const auto& s = trace.summary;

    json j;
    j["converged"] = s.converged;
    j["t_converge"] = optional_number(s.t_converge);
    j["final_error"] = s.final_error;
    j["max_storage_residual"] = s.max_storage_residual;
    j["max_vd_residual"] = s.max_vd_residual;
    j["peak_abs_u"] = vec_json(s.peak_abs_u);
    j["audit"] = {{"clean", clean},
                  {"eps_num", tol.eps_num},
                  {"fitted_constant", tol.constant},
                  {"refinement_ratio", finite_or_null(tol.refinement_ratio)},
                  {"max_storage_violation", audit.max_storage_violation},
                  {"max_vd_violation", audit.max_vd_violation},
                  {"max_vd_increase", audit.max_vd_increase},
                  {"storage_fd_error", audit.storage_fd_error},
                  {"vd_fd_error", audit.vd_fd_error}};
    j["setpoint"] = {{"x_star", vec_json(trace.setpoint.x_star)},
                     {"u_star", vec_json(trace.setpoint.u_star)},
                     {"gamma_star", vec_json(trace.setpoint.gamma_star)}};
    j["rows"] = krasov::decimate(trace, sc.simulation.log_stride).records.size();
    j["trace"] = trace_path.string();
    j["scenario"] = scenario_json(sc);
    const fs::path summary_path = output_path(sc, sc.summary_file);
    write_json(summary_path, j);

    std::ostringstream line;
    line << path << ": converged=" << (s.converged ? "true" : "false")
         << " final_error=" << s.final_error << " audit=" << (clean ? "clean" : "VIOLATED")
         << " -> " << trace_path.string();
    emit(line.str());
    return (s.converged && clean) ? int{kOk} : int{kFailed};
  });
}

krasov::Vector parse_vector(const std::string& text) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw krasov::ParseError("--dx0: cannot parse \"" + item + "\" as a number", "--dx0", 0);
    }
  }
  return Eigen::Map<krasov::Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

int run_variational(const std::string& path, const Options& opts) {
  return guarded(path, [&] {
    krasov::Scenario sc = load(path, opts);
    if (!sc.has_setpoint) {
      throw krasov::ParseError("setpoint.x: required for variational", "setpoint.x", 0);
    }
    if (!opts.dx0.empty()) {
      sc.dx0 = parse_vector(opts.dx0);
      if (sc.dx0.size() != sc.model->state_dim()) {
        throw krasov::ParseError("--dx0: expected " + std::to_string(sc.model->state_dim()) +
                                     " entries",
                                 "--dx0", 0);
      }
    }
    const auto dv = sc.variation_input();
    const auto trace = krasov::simulate_prolonged(*sc.model, full_grid(sc.simulation), sc.dx0, dv);
    const auto logged = krasov::decimate(trace, sc.simulation.log_stride);
    const fs::path csv_path = output_path(sc, sc.variational_file);
    {
      std::ofstream csv(csv_path);
      krasov::write_variational_csv(csv, logged);
    }
    const auto fine = krasov::simulate_prolonged(*sc.model, halved(sc.simulation), sc.dx0, dv);
    const auto audit = krasov::variational_audit(trace);
    const auto audit_fine = krasov::variational_audit(fine);
    const auto tol = krasov::calibrate_tolerance(audit.fd_error, audit.log_interval,
                                                 audit_fine.fd_error, audit_fine.log_interval,
                                                 audit.derivative_scale);
    const bool ok = audit.max_violation <= tol.eps_num;

    json j;
    j["max_violation"] = audit.max_violation;
    j["eps_num"] = tol.eps_num;
    j["fitted_constant"] = tol.constant;
    j["refinement_ratio"] = finite_or_null(tol.refinement_ratio);
    j["fd_error"] = audit.fd_error;
    j["max_storage_increase"] = audit.max_increase;
    j["dx0"] = vec_json(sc.dx0);
    j["dv_amplitude"] = sc.dv_amplitude;
    j["dv_frequency"] = sc.dv_frequency;
    j["rows"] = logged.records.size();
    j["trace"] = csv_path.string();
    j["scenario"] = scenario_json(sc);
    write_json(output_path(sc, sc.name + ".variational.json"), j);

    std::ostringstream line;
    line << path << ": max_violation=" << audit.max_violation << " eps_num=" << tol.eps_num << " -> "
         << (ok ? "passive" : "VIOLATED") << " " << csv_path.string();
    emit(line.str());
    return ok ? int{kOk} : int{kFailed};
  });
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("krasov");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("KRASOV_LOG")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
}

template <typename Fn>
int run_all(const Options& opts, Fn&& fn) {
  std::vector<std::future<int>> jobs;
  jobs.reserve(opts.scenarios.size());
  for (const auto& path : opts.scenarios) {
    jobs.push_back(std::async(std::launch::async, [&fn, &opts, path] { return fn(path, opts); }));
  }
  int worst = kOk;
  for (auto& job : jobs) worst = std::max(worst, job.get());
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Krasovskii passivity-based control toolkit"};
  app.require_subcommand(1);

  Options opts;
  double dt = 0.0;
  double t_end = 0.0;
  std::uint64_t seed = 0;
  std::string out_dir;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("scenarios", opts.scenarios, "Scenario files (run concurrently)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out-dir", out_dir, "Directory for reports and traces");
    cmd->add_option("--dt", dt, "Override the integration step")->check(CLI::PositiveNumber);
    cmd->add_option("--t-end", t_end, "Override the horizon")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "Override the sampling seed");
  };

  auto* check = app.add_subcommand("check", "Verify assumptions A1-A3 by sampling");
  add_common(check);
  auto* simulate = app.add_subcommand("simulate", "Closed-loop run with passivity audit");
  add_common(simulate);
  auto* variational = app.add_subcommand("variational", "Prolonged-system run with delta-storage audit");
  add_common(variational);
  variational->add_option("--dx0", opts.dx0, "Initial variation, comma separated");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kParse;
  }

  auto given = [](const CLI::App* cmd, const char* name) { return cmd->count(name) > 0; };
  const CLI::App* active = app.get_subcommands().front();
  if (given(active, "--dt")) opts.overrides.dt = dt;
  if (given(active, "--t-end")) opts.overrides.t_end = t_end;
  if (given(active, "--seed")) opts.overrides.seed = seed;
  if (given(active, "--out-dir")) opts.overrides.out_dir = out_dir;

  if (*check) return run_all(opts, run_check);
  if (*simulate) return run_all(opts, run_simulate);
  return run_all(opts, run_variational);
}
