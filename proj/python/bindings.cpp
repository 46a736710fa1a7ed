#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "krasov/assumptions.hpp"
#include "krasov/control.hpp"
#include "krasov/models.hpp"
#include "krasov/scenario.hpp"
#include "krasov/simulator.hpp"

namespace py = pybind11;
using namespace krasov;

namespace {

// Records as row-stacked matrices, one column block per field.
template <typename Rec, typename Get>
Matrix stack(const std::vector<Rec>& recs, Get&& get) {
  if (recs.empty()) return Matrix();
  const Vector first = get(recs.front());
  Matrix out(static_cast<Eigen::Index>(recs.size()), first.size());
  for (std::size_t k = 0; k < recs.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = get(recs[k]).transpose();
  return out;
}

template <typename Rec>
Vector column(const std::vector<Rec>& recs, double Rec::*field) {
  Vector out(static_cast<Eigen::Index>(recs.size()));
  for (std::size_t k = 0; k < recs.size(); ++k) out[static_cast<Eigen::Index>(k)] = recs[k].*field;
  return out;
}

py::dict trace_dict(const SimulationTrace& tr) {
  const auto& r = tr.records;
  py::dict d;
  d["t"] = column(r, &TraceRecord::t);
  d["x"] = stack(r, [](const TraceRecord& q) { return q.x; });
  d["u"] = stack(r, [](const TraceRecord& q) { return q.u; });
  d["xdot"] = stack(r, [](const TraceRecord& q) { return q.xdot; });
  d["y"] = stack(r, [](const TraceRecord& q) { return q.y; });
  d["vdot"] = stack(r, [](const TraceRecord& q) { return q.vdot; });
  d["V"] = column(r, &TraceRecord::V);
  d["Vd"] = column(r, &TraceRecord::Vd);
  d["storage_residual"] = column(r, &TraceRecord::storage_residual);
  d["vd_residual"] = column(r, &TraceRecord::vd_residual);
  py::dict s;
  s["converged"] = tr.summary.converged;
  s["t_converge"] = tr.summary.t_converge;
  s["final_error"] = tr.summary.final_error;
  s["max_storage_residual"] = tr.summary.max_storage_residual;
  s["max_vd_residual"] = tr.summary.max_vd_residual;
  s["peak_abs_u"] = tr.summary.peak_abs_u;
  d["summary"] = s;
  py::dict sp;
  sp["x_star"] = tr.setpoint.x_star;
  sp["u_star"] = tr.setpoint.u_star;
  sp["gamma_star"] = tr.setpoint.gamma_star;
  d["setpoint"] = sp;
  d["dt"] = tr.dt;
  d["log_stride"] = tr.log_stride;
  return d;
}

py::dict variational_dict(const VariationalTrace& tr) {
  const auto& r = tr.records;
  py::dict d;
  d["t"] = column(r, &VariationalRecord::t);
  d["x"] = stack(r, [](const VariationalRecord& q) { return q.x; });
  d["u"] = stack(r, [](const VariationalRecord& q) { return q.u; });
  d["dx"] = stack(r, [](const VariationalRecord& q) { return q.dx; });
  d["du"] = stack(r, [](const VariationalRecord& q) { return q.du; });
  d["dy"] = stack(r, [](const VariationalRecord& q) { return q.dy; });
  d["storage"] = column(r, &VariationalRecord::storage);
  d["residual"] = column(r, &VariationalRecord::residual);
  return d;
}

// Runs the closed loop on the integration grid, audits it together with a
// dt-halved twin, and returns the calibrated report.
py::dict audit_run(const ControlAffineModel& model, SimulationConfig cfg) {
  cfg.log_stride = 1;
  const auto coarse = passivity_audit(simulate_closed_loop(model, cfg), cfg.gains);
  cfg.dt /= 2.0;
  cfg.waive_assumptions = true;
  const auto fine = passivity_audit(simulate_closed_loop(model, cfg), cfg.gains);
  const auto tol = calibrate_tolerance(coarse, fine);
  py::dict d;
  d["clean"] = coarse.clean(tol.eps_num);
  d["eps_num"] = tol.eps_num;
  d["fitted_constant"] = tol.constant;
  d["refinement_ratio"] = tol.refinement_ratio;
  d["max_storage_violation"] = coarse.max_storage_violation;
  d["max_vd_violation"] = coarse.max_vd_violation;
  d["max_vd_increase"] = coarse.max_vd_increase;
  d["storage_fd_error"] = coarse.storage_fd_error;
  d["vd_fd_error"] = coarse.vd_fd_error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_krasov, m) {
  m.doc() = "Krasovskii passivity-based control: models, assumption checks, simulation";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<SingularityError>(m, "SingularityError", m.attr("Error").ptr());
  py::register_exception<InfeasibleSetpointError>(m, "InfeasibleSetpointError", m.attr("Error").ptr());
  py::register_exception<IntegrabilityError>(m, "IntegrabilityError", m.attr("Error").ptr());
  py::register_exception<AssumptionError>(m, "AssumptionError", m.attr("Error").ptr());
  py::register_exception<ParseError>(m, "ParseError", m.attr("Error").ptr());

  py::class_<Box>(m, "Box")
      .def(py::init<Vector, Vector>(), py::arg("lower"), py::arg("upper"))
      .def_readonly("lower", &Box::lower)
      .def_readonly("upper", &Box::upper)
      .def("contains", &Box::contains, py::arg("x"), py::arg("margin") = 0.0)
      .def("sample", &Box::sample, py::arg("count"), py::arg("seed"));

  py::class_<ControlAffineModel>(m, "ControlAffineModel")
      .def_property_readonly("name", &ControlAffineModel::name)
      .def_property_readonly("state_dim", &ControlAffineModel::state_dim)
      .def_property_readonly("input_dim", &ControlAffineModel::input_dim)
      .def_property_readonly("M", &ControlAffineModel::M)
      .def_property_readonly("state_domain", &ControlAffineModel::state_domain)
      .def("drift", &ControlAffineModel::drift)
      .def("input_matrix", &ControlAffineModel::input_matrix)
      .def("drift_jacobian", &ControlAffineModel::drift_jacobian)
      .def("input_matrix_directional", &ControlAffineModel::input_matrix_directional)
      .def("closed_form_potential", &ControlAffineModel::closed_form_potential);

  py::class_<ControllerGains>(m, "ControllerGains")
      .def(py::init<>())
      .def(py::init<double, double, double>(), py::arg("k1"), py::arg("kd"), py::arg("ki"))
      .def_property_readonly("k1", &ControllerGains::k1)
      .def_property_readonly("kd", &ControllerGains::kd)
      .def_property_readonly("ki", &ControllerGains::ki);

  py::class_<AssumptionConfig>(m, "AssumptionConfig")
      .def(py::init<>())
      .def_readwrite("samples", &AssumptionConfig::samples)
      .def_readwrite("probes", &AssumptionConfig::probes)
      .def_readwrite("tolerance", &AssumptionConfig::tolerance)
      .def_readwrite("margin_a1", &AssumptionConfig::margin_a1)
      .def_readwrite("seed", &AssumptionConfig::seed);

  py::class_<SimulationConfig>(m, "SimulationConfig")
      .def(py::init<>())
      .def_readwrite("t_end", &SimulationConfig::t_end)
      .def_readwrite("dt", &SimulationConfig::dt)
      .def_readwrite("x0", &SimulationConfig::x0)
      .def_readwrite("u0", &SimulationConfig::u0)
      .def_readwrite("gains", &SimulationConfig::gains)
      .def_readwrite("x_star", &SimulationConfig::x_star)
      .def_readwrite("vbar_dot", &SimulationConfig::vbar_dot)
      .def_readwrite("log_stride", &SimulationConfig::log_stride)
      .def_readwrite("waive_assumptions", &SimulationConfig::waive_assumptions)
      .def_readwrite("assumption_check", &SimulationConfig::assumption_check)
      .def_readwrite("convergence_band", &SimulationConfig::convergence_band);

  py::class_<models::HvacTwoZoneParams>(m, "HvacTwoZoneParams")
      .def(py::init<>())
      .def_readwrite("C1", &models::HvacTwoZoneParams::C1)
      .def_readwrite("C2", &models::HvacTwoZoneParams::C2)
      .def_readwrite("C3", &models::HvacTwoZoneParams::C3)
      .def_readwrite("C4", &models::HvacTwoZoneParams::C4)
      .def_readwrite("R31", &models::HvacTwoZoneParams::R31)
      .def_readwrite("R42", &models::HvacTwoZoneParams::R42)
      .def_readwrite("R34", &models::HvacTwoZoneParams::R34)
      .def_readwrite("R10", &models::HvacTwoZoneParams::R10)
      .def_readwrite("R20", &models::HvacTwoZoneParams::R20)
      .def_readwrite("cp", &models::HvacTwoZoneParams::cp)
      .def_readwrite("Ts", &models::HvacTwoZoneParams::Ts)
      .def_readwrite("Tinf", &models::HvacTwoZoneParams::Tinf)
      .def_readwrite("domain_lower", &models::HvacTwoZoneParams::domain_lower)
      .def_readwrite("domain_upper", &models::HvacTwoZoneParams::domain_upper);

  m.def("hvac_model", &models::hvac_model, py::arg("params") = models::HvacTwoZoneParams{});
  m.def("hvac_equilibrium_state", &models::hvac_equilibrium_state, py::arg("params"), py::arg("t1"),
        py::arg("t2"));
  m.def("hvac_default_scenario", [] {
    auto sc = models::hvac_default_scenario();
    return py::make_tuple(sc.model, sc.config);
  });
  m.def(
      "rlc_series",
      [](double L, double C, double R) { return models::rlc_series({L, C, R}).model; },
      py::arg("L") = 1.0, py::arg("C") = 1.0, py::arg("R") = 0.5);
  m.def("rlc_two_mesh", [] { return models::rlc_two_mesh().model; });
  m.def("linear_model", &models::linear_model, py::arg("A"), py::arg("B"), py::arg("metric"),
        py::arg("domain"), py::arg("name") = "linear");

  m.def("annihilator", &annihilator);
  m.def("_check_all_json", [](const ControlAffineModel& model, const AssumptionConfig& cfg) {
    return to_json(check_all(model, cfg)).dump();
  }, py::arg("model"), py::arg("config") = AssumptionConfig{});

  m.def("xdot", &xdot);
  m.def("alpha", &alpha);
  m.def("beta", &beta);
  m.def("output_y", &output_y);
  m.def("u_dot", &u_dot);
  m.def("g_time_derivative", &g_time_derivative);
  m.def("potential_gamma", &potential_gamma);
  m.def("potential_via_path", &potential_via_path, py::arg("model"), py::arg("x"), py::arg("x_ref"),
        py::arg("segments") = kDefaultPathSegments);
  m.def("solve_equilibrium_input", &solve_equilibrium_input);
  m.def("equilibrium_state_for_input", &equilibrium_state_for_input, py::arg("model"), py::arg("u"),
        py::arg("guess") = Vector());

  m.def("simulate_closed_loop", [](const ControlAffineModel& model, const SimulationConfig& cfg) {
    SimulationTrace tr;
    {
      py::gil_scoped_release release;
      tr = simulate_closed_loop(model, cfg);
    }
    return trace_dict(tr);
  });
  m.def("audit_closed_loop", [](const ControlAffineModel& model, const SimulationConfig& cfg) {
    return audit_run(model, cfg);
  });
  m.def(
      "simulate_prolonged",
      [](const ControlAffineModel& model, const SimulationConfig& cfg, const Vector& dx0) {
        return variational_dict(simulate_prolonged(model, cfg, dx0));
      },
      py::arg("model"), py::arg("config"), py::arg("dx0"));

  m.def("load_scenario", [](const std::filesystem::path& path) {
    const Scenario sc = load_scenario(path);
    return py::make_tuple(*sc.model, sc.simulation);
  });
}
