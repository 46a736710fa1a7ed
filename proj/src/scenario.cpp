#include "krasov/scenario.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "krasov/models.hpp"

namespace krasov {

namespace {

int line_of(const toml::node& node) { return static_cast<int>(node.source().begin.line); }

[[noreturn]] void fail(const std::string& field, int line, const std::string& message) {
  std::ostringstream os;
  if (line > 0) os << "line " << line << ": ";
  os << field << ": " << message;
  throw ParseError(os.str(), field, line);
}

/// Reads typed fields out of one TOML table and remembers which keys were
/// consumed so leftovers can be reported.
class TableReader {
 public:
  TableReader(const toml::table* table, std::string path, int line)
      : table_(table), path_(std::move(path)), line_(line) {}

  bool present() const { return table_ != nullptr; }
  const std::string& path() const { return path_; }
  int line() const { return line_; }

  std::string field(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const toml::node* take(std::string_view key) {
    if (!table_) return nullptr;
    used_.insert(std::string(key));
    return table_->get(key);
  }

  std::optional<double> number(std::string_view key) {
    const toml::node* node = take(key);
    if (!node) return std::nullopt;
    if (auto v = node->value<double>(); v && (node->is_floating_point() || node->is_integer())) {
      if (!std::isfinite(*v)) fail(field(key), line_of(*node), "must be finite");
      return *v;
    }
    fail(field(key), line_of(*node), "expected a number");
  }

  std::optional<std::int64_t> integer(std::string_view key) {
    const toml::node* node = take(key);
    if (!node) return std::nullopt;
    if (!node->is_integer()) fail(field(key), line_of(*node), "expected an integer");
    return *node->value<std::int64_t>();
  }

  std::optional<bool> boolean(std::string_view key) {
    const toml::node* node = take(key);
    if (!node) return std::nullopt;
    if (!node->is_boolean()) fail(field(key), line_of(*node), "expected true or false");
    return *node->value<bool>();
  }

  std::optional<std::string> string(std::string_view key) {
    const toml::node* node = take(key);
    if (!node) return std::nullopt;
    if (!node->is_string()) fail(field(key), line_of(*node), "expected a string");
    return std::string(*node->value<std::string_view>());
  }

  /// Array of numbers, or a bare number broadcast to `broadcast` entries.
  std::optional<Vector> vector(std::string_view key, int broadcast = 0) {
    const toml::node* node = take(key);
    if (!node) return std::nullopt;
    if (broadcast > 0 && (node->is_integer() || node->is_floating_point())) {
      return Vector::Constant(broadcast, *node->value<double>());
    }
    return to_vector(*node, field(key));
  }

  std::optional<Matrix> matrix(std::string_view key) {
    const toml::node* node = take(key);
    if (!node) return std::nullopt;
    const auto* rows = node->as_array();
    if (!rows || rows->empty()) fail(field(key), line_of(*node), "expected an array of rows");
    std::vector<Vector> parsed;
    for (const auto& row : *rows) parsed.push_back(to_vector(row, field(key)));
    Matrix m(static_cast<Eigen::Index>(parsed.size()), parsed.front().size());
    for (std::size_t r = 0; r < parsed.size(); ++r) {
      if (parsed[r].size() != m.cols()) fail(field(key), line_of(*node), "rows differ in length");
      m.row(static_cast<Eigen::Index>(r)) = parsed[r].transpose();
    }
    return m;
  }

  TableReader sub(std::string_view key) {
    const toml::node* node = take(key);
    if (!node) return TableReader(nullptr, field(key), 0);
    const auto* t = node->as_table();
    if (!t) fail(field(key), line_of(*node), "expected a table");
    return TableReader(t, field(key), line_of(*node));
  }

  /// Throws on the first key that was never read.
  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!used_.count(std::string(k.str()))) fail(field(k.str()), line_of(v), "unknown field");
    }
  }

 private:
  static Vector to_vector(const toml::node& node, const std::string& name) {
    const auto* arr = node.as_array();
    if (!arr || arr->empty()) fail(name, line_of(node), "expected a non-empty array of numbers");
    Vector v(static_cast<Eigen::Index>(arr->size()));
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto& e = (*arr)[i];
      if (!(e.is_integer() || e.is_floating_point())) {
        fail(name, line_of(node), "expected a non-empty array of numbers");
      }
      v[static_cast<Eigen::Index>(i)] = *e.value<double>();
      if (!std::isfinite(v[static_cast<Eigen::Index>(i)])) fail(name, line_of(node), "must be finite");
    }
    return v;
  }

  const toml::table* table_;
  std::string path_;
  int line_;
  std::set<std::string> used_;
};

template <typename Fn>
auto guarded(const std::string& field, int line, Fn&& fn) {
  try {
    return fn();
  } catch (const ParseError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    fail(field, line, e.what());
  }
}

void set_if(double& slot, const std::optional<double>& v) {
  if (v) slot = *v;
}

struct BuiltModel {
  std::shared_ptr<const ControlAffineModel> model;
  nlohmann::json params;
  std::optional<Vector> default_setpoint;
  Vector default_x0;
  std::optional<models::HvacTwoZoneParams> hvac;
};

BuiltModel build_hvac(TableReader& params, TableReader& domain) {
  models::HvacTwoZoneParams p;
  set_if(p.C1, params.number("C1"));
  set_if(p.C2, params.number("C2"));
  set_if(p.C3, params.number("C3"));
  set_if(p.C4, params.number("C4"));
  set_if(p.R31, params.number("R31"));
  set_if(p.R31, params.number("R13"));
  set_if(p.R42, params.number("R42"));
  set_if(p.R42, params.number("R24"));
  set_if(p.R34, params.number("R34"));
  set_if(p.R10, params.number("R10"));
  set_if(p.R20, params.number("R20"));
  set_if(p.cp, params.number("cp"));
  set_if(p.Ts, params.number("Ts"));
  set_if(p.Tinf, params.number("Tinf"));
  set_if(p.domain_lower, domain.number("lower"));
  set_if(p.domain_upper, domain.number("upper"));
  BuiltModel out;
  out.model = guarded(params.path(), params.line(), [&] {
    return std::make_shared<const ControlAffineModel>(models::hvac_model(p));
  });
  out.params = models::to_json(p);
  out.default_setpoint = models::hvac_equilibrium_state(p, 2.5, 6.0);
  out.default_x0 = Vector::Constant(4, p.Tinf);
  out.hvac = p;
  return out;
}

void apply_domain(models::RlcSystem& sys, TableReader& domain) {
  const int n = sys.model.state_dim();
  auto lo = domain.vector("lower", n);
  auto hi = domain.vector("upper", n);
  if (!lo && !hi) return;
  models::RlcParams p = sys.params;
  guarded(domain.path(), domain.line(), [&] {
    p.domain = Box(lo.value_or(p.domain.lower), hi.value_or(p.domain.upper));
    sys = models::rlc_model(std::move(p));
    return 0;
  });
}

nlohmann::json box_json(const Box& b) {
  return {{"lower", std::vector<double>(b.lower.data(), b.lower.data() + b.lower.size())},
          {"upper", std::vector<double>(b.upper.data(), b.upper.data() + b.upper.size())}};
}

BuiltModel build_rlc_series(TableReader& params, TableReader& domain) {
  models::RlcSeriesParams p;
  set_if(p.L, params.number("L"));
  set_if(p.C, params.number("C"));
  set_if(p.R, params.number("R"));
  auto sys = guarded(params.path(), params.line(), [&] { return models::rlc_series(p); });
  apply_domain(sys, domain);
  BuiltModel out;
  out.params = {{"L", p.L}, {"C", p.C}, {"R", p.R}, {"domain", box_json(sys.model.state_domain())}};
  out.model = std::make_shared<const ControlAffineModel>(sys.model);
  out.default_x0 = Vector::Zero(2);
  return out;
}

BuiltModel build_rlc_two_mesh(TableReader& params, TableReader& domain) {
  models::RlcTwoMeshParams p;
  set_if(p.L1, params.number("L1"));
  set_if(p.L2, params.number("L2"));
  set_if(p.C1, params.number("C1"));
  set_if(p.C2, params.number("C2"));
  set_if(p.R1, params.number("R1"));
  set_if(p.R2, params.number("R2"));
  set_if(p.Rp, params.number("Rp"));
  set_if(p.Rload, params.number("Rload"));
  auto sys = guarded(params.path(), params.line(), [&] { return models::rlc_two_mesh(p); });
  apply_domain(sys, domain);
  BuiltModel out;
  out.params = {{"L1", p.L1}, {"L2", p.L2}, {"C1", p.C1}, {"C2", p.C2},
                {"R1", p.R1}, {"R2", p.R2}, {"Rp", p.Rp}, {"Rload", p.Rload},
                {"domain", box_json(sys.model.state_domain())}};
  out.model = std::make_shared<const ControlAffineModel>(sys.model);
  out.default_x0 = Vector::Zero(4);
  return out;
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

BuiltModel build_linear(TableReader& params, TableReader& domain) {
  auto a = params.matrix("A");
  auto b = params.matrix("B");
  if (!a) fail(params.field("A"), params.line(), "required for model \"linear\"");
  if (!b) fail(params.field("B"), params.line(), "required for model \"linear\"");
  const auto n = static_cast<int>(a->rows());
  Matrix metric = params.matrix("metric").value_or(Matrix::Identity(n, n));
  auto lo = domain.vector("lower", n);
  auto hi = domain.vector("upper", n);
  if (!lo || !hi) fail(domain.path(), domain.line(), "lower and upper are required for model \"linear\"");
  BuiltModel out;
  out.model = guarded(params.path(), params.line(), [&] {
    return std::make_shared<const ControlAffineModel>(
        models::linear_model(*a, *b, metric, Box(*lo, *hi)));
  });
  out.params = {{"A", matrix_json(*a)}, {"B", matrix_json(*b)}, {"metric", matrix_json(metric)},
                {"domain", box_json(out.model->state_domain())}};
  out.default_x0 = Vector::Zero(n);
  return out;
}

void require_length(const Vector& v, int n, const std::string& field, int line) {
  if (v.size() != n) {
    fail(field, line, "expected " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
  }
}

}  // namespace

SignalFn Scenario::variation_input() const {
  if (dv_amplitude == 0.0) return {};
  const int m = model->input_dim();
  const double amp = dv_amplitude;
  const double omega = 2.0 * std::numbers::pi * dv_frequency;
  return [m, amp, omega](double t) { return Vector(Vector::Constant(m, amp * std::sin(omega * t))); };
}

Scenario parse_scenario(std::string_view text, const std::string& name) {
  toml::table root;
  try {
    root = toml::parse(text, name);
  } catch (const toml::parse_error& e) {
    const int line = static_cast<int>(e.source().begin.line);
    fail("<syntax>", line, std::string(e.description()));
  }

  TableReader top(&root, "", 0);
  Scenario sc;
  sc.name = name;
  const auto kind = top.string("model");
  if (!kind) fail("model", 0, "required (hvac2z | rlc-series | rlc-2mesh | linear)");
  sc.model_kind = *kind;

  TableReader params = top.sub("params");
  TableReader domain = top.sub("domain");
  BuiltModel built;
  if (*kind == "hvac2z") {
    built = build_hvac(params, domain);
  } else if (*kind == "rlc-series") {
    built = build_rlc_series(params, domain);
  } else if (*kind == "rlc-2mesh") {
    built = build_rlc_two_mesh(params, domain);
  } else if (*kind == "linear") {
    built = build_linear(params, domain);
  } else {
    fail("model", line_of(*root.get("model")), "unknown model \"" + *kind + "\"");
  }
  params.finish();
  domain.finish();
  sc.model = built.model;
  sc.resolved_params = built.params;
  const int n = sc.model->state_dim();
  const int m = sc.model->input_dim();

  if (auto seed = top.integer("seed")) {
    if (*seed < 0) fail("seed", 0, "must be non-negative");
    sc.check.seed = static_cast<std::uint64_t>(*seed);
  }

  TableReader gains = top.sub("gains");
  {
    const double k1 = gains.number("k1").value_or(1.0);
    const double kd = gains.number("kd").value_or(1.0);
    const double ki = gains.number("ki").value_or(1.0);
    sc.simulation.gains =
        guarded(gains.path(), gains.line(), [&] { return ControllerGains(k1, kd, ki); });
  }
  gains.finish();

  TableReader setpoint = top.sub("setpoint");
  if (auto x = setpoint.vector("x")) {
    require_length(*x, n, setpoint.field("x"), setpoint.line());
    sc.simulation.x_star = *x;
  } else if (auto zones = setpoint.vector("zones")) {
    if (!built.hvac) fail(setpoint.field("zones"), setpoint.line(), "only valid for model hvac2z");
    require_length(*zones, 2, setpoint.field("zones"), setpoint.line());
    sc.simulation.x_star = models::hvac_equilibrium_state(*built.hvac, (*zones)[0], (*zones)[1]);
  } else if (auto input = setpoint.vector("input")) {
    require_length(*input, m, setpoint.field("input"), setpoint.line());
    sc.simulation.x_star = guarded(setpoint.field("input"), setpoint.line(), [&] {
      return equilibrium_state_for_input(*built.model, *input);
    });
  } else if (built.default_setpoint) {
    sc.simulation.x_star = *built.default_setpoint;
  }
  sc.has_setpoint = sc.simulation.x_star.size() == n;
  setpoint.finish();

  TableReader initial = top.sub("initial");
  sc.simulation.x0 = initial.vector("x").value_or(built.default_x0);
  require_length(sc.simulation.x0, n, initial.field("x"), initial.line());
  sc.simulation.u0 = initial.vector("u").value_or(Vector::Zero(m));
  require_length(sc.simulation.u0, m, initial.field("u"), initial.line());
  if (initial.boolean("at_setpoint").value_or(false)) {
    if (!sc.has_setpoint) fail(initial.field("at_setpoint"), initial.line(), "needs a setpoint");
    sc.simulation.x0 = sc.simulation.x_star;
    sc.simulation.u0 = guarded(initial.field("at_setpoint"), initial.line(), [&] {
      return solve_equilibrium_input(*built.model, sc.simulation.x_star);
    });
  }
  initial.finish();

  TableReader sim = top.sub("simulation");
  sc.simulation.dt = sim.number("dt").value_or(1e-3);
  sc.simulation.t_end = sim.number("t_end").value_or(40.0);
  sc.simulation.log_stride = static_cast<int>(sim.integer("log_stride").value_or(10));
  sc.simulation.convergence_band = sim.number("band").value_or(0.01);
  sc.simulation.waive_assumptions = sim.boolean("waive_assumptions").value_or(false);
  sim.finish();
  guarded(sim.path(), sim.line(), [&] {
    sc.simulation.validate();
    return 0;
  });

  TableReader check = top.sub("check");
  sc.check.samples = static_cast<int>(check.integer("samples").value_or(sc.check.samples));
  sc.check.probes = static_cast<int>(check.integer("probes").value_or(sc.check.probes));
  sc.check.tolerance = check.number("tolerance").value_or(sc.check.tolerance);
  sc.check.margin_a1 = check.number("margin").value_or(sc.check.margin_a1);
  check.finish();
  if (sc.check.samples < 1) fail(check.field("samples"), check.line(), "must be >= 1");
  if (sc.check.probes < 1) fail(check.field("probes"), check.line(), "must be >= 1");
  if (sc.check.margin_a1 < 0.0) fail(check.field("margin"), check.line(), "must be >= 0");
  sc.simulation.assumption_check = sc.check;

  TableReader var = top.sub("variational");
  sc.dx0 = var.vector("dx0").value_or(Vector::Zero(n));
  require_length(sc.dx0, n, var.field("dx0"), var.line());
  sc.dv_amplitude = var.number("dv_amplitude").value_or(0.0);
  sc.dv_frequency = var.number("dv_frequency").value_or(1.0);
  var.finish();

  TableReader out = top.sub("output");
  sc.out_dir = out.string("dir").value_or(".");
  sc.report_file = out.string("report").value_or(name + ".report.json");
  sc.trace_file = out.string("trace").value_or(name + ".trace.csv");
  sc.summary_file = out.string("summary").value_or(name + ".summary.json");
  sc.variational_file = out.string("variational").value_or(name + ".variational.csv");
  out.finish();

  top.finish();
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file " + path.string(), "<file>", 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.stem().string());
}

void apply_overrides(Scenario& sc, const ScenarioOverrides& o) {
  if (o.dt) sc.simulation.dt = *o.dt;
  if (o.t_end) sc.simulation.t_end = *o.t_end;
  if (o.seed) {
    sc.check.seed = *o.seed;
    sc.simulation.assumption_check.seed = *o.seed;
  }
  if (o.out_dir) sc.out_dir = *o.out_dir;
  guarded("<override>", 0, [&] {
    sc.simulation.validate();
    return 0;
  });
}

}  // namespace krasov
