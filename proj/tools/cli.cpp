#include "cli.hpp"

#include "dissect/active.hpp"
#include "dissect/csv.hpp"
#include "dissect/decouple.hpp"
#include "dissect/errors.hpp"
#include "dissect/fixtures.hpp"
#include "dissect/simulate.hpp"
#include "dissect/topology.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <thread>

namespace dissect::cli {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr std::size_t kDefaultTimes = 101;
constexpr std::size_t kDefaultPoints = 21;

struct Source {
  CircuitGraph circuit;
  std::string label;
  std::optional<ExperimentPreset> preset;
};

Source load_source(const RunConfig& cfg) {
  const int given = !cfg.netlist.empty() + !cfg.fixture.empty() + !cfg.experiment.empty();
  if (given == 0) throw CLI::ValidationError("one of --netlist, --fixture or --paper-experiment is required");
  if (!cfg.netlist.empty() && given > 1) throw CLI::ValidationError("--netlist excludes --fixture and --paper-experiment");
  Source s;
  if (!cfg.experiment.empty()) {
    s.preset = experiment_preset(cfg.experiment);
    if (!cfg.fixture.empty() && cfg.fixture != s.preset->fixture) {
      throw CLI::ValidationError("--fixture does not match --paper-experiment " + cfg.experiment);
    }
    s.circuit = load_fixture(s.preset->fixture);
    s.label = s.preset->fixture;
    return s;
  }
  if (!cfg.fixture.empty()) {
    s.circuit = load_fixture(cfg.fixture);
    s.label = cfg.fixture;
    for (const auto& name : experiment_names()) {
      auto preset = experiment_preset(name);
      if (preset.fixture == cfg.fixture) {
        s.preset = std::move(preset);
        break;
      }
    }
    return s;
  }
  s.circuit = load_netlist_file(cfg.netlist);
  s.label = cfg.netlist;
  return s;
}

Vector parameter_point(const CircuitGraph& circuit, const Vector& base, const RunConfig& cfg) {
  Vector p = base.size() == static_cast<Index>(circuit.parameter_space.size()) ? base : circuit.nominal_parameters();
  for (const auto& [name, value] : cfg.parameters) {
    const auto idx = circuit.parameter_index(name);
    if (!idx) throw ValidationError("unknown-parameter", "unknown parameter '" + name + "'");
    p(static_cast<Index>(*idx)) = value;
  }
  return p;
}

Vector parameter_point(const Source& s, const RunConfig& cfg) {
  return parameter_point(s.circuit, s.preset ? s.preset->probe : Vector(), cfg);
}

Method parse_method(const std::string& name) {
  if (name == "implicit-euler" || name == "ie") return Method::ImplicitEuler;
  if (name == "trapezoidal" || name == "trap") return Method::Trapezoidal;
  throw Error("invalid-config", "unknown integration method '" + name + "'");
}

double require(const std::optional<double>& v, const char* flag) {
  if (!v) throw Error("invalid-config", std::string(flag) + " is required for this circuit");
  return *v;
}

std::optional<double> first(std::optional<double> a, std::optional<double> b) { return a ? a : b; }

std::optional<double> preset_value(const Source& s, double ExperimentPreset::*field) {
  if (!s.preset) return std::nullopt;
  return (*s.preset).*field;
}

fs::path output_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.out.empty() ? fs::path(".") : fs::path(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path.string(), j.dump(2) + "\n"); }

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector json_vector(const json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

json basis_json(const Basis& b) {
  return json{{"construction", to_string(b.construction)},
              {"complement", matrix_json(b.complement)},
              {"kernel", matrix_json(b.kernel)}};
}

json load_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error("invalid-config", path + ": " + e.what());
  }
}

std::string safe_name(const std::string& variable) {
  std::string out = variable;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  }
  return out;
}

// ---------------------------------------------------------------- parse

int cmd_parse(const RunConfig& cfg, std::ostream& out) {
  const Source s = load_source(cfg);
  const CircuitGraph& g = s.circuit;
  json branches = json::array();
  for (const auto& b : g.branches) {
    json terminals = json::array();
    for (auto t : b.terminals) terminals.push_back(g.nodes[t]);
    branches.push_back({{"name", b.name}, {"kind", to_string(b.device.kind)}, {"terminals", terminals}});
  }
  json params = json::array();
  for (const auto& r : g.parameter_space) params.push_back({{"name", r.name}, {"lower", r.lower}, {"upper", r.upper}});
  const json report{{"source", s.label}, {"nodes", g.nodes}, {"branches", branches}, {"parameters", params}};
  out << report.dump() << "\n";
  if (!cfg.out.empty()) {
    const fs::path dir = output_dir(cfg);
    write_file_atomic((dir / "netlist.cir").string(), to_netlist(g));
    write_json(dir / "circuit.json", report);
  }
  return 0;
}

// ---------------------------------------------------------------- index

int cmd_index(const RunConfig& cfg, std::ostream& out) {
  const Source s = load_source(cfg);
  const IndexReport r = detect_index(s.circuit);
  const json report{{"source", s.label},
                    {"index", r.numeric_index},
                    {"topological_index", r.topological_index},
                    {"numeric_index", r.numeric_index},
                    {"cv_loops", r.cv_loops},
                    {"li_cutsets", r.li_cutsets},
                    {"kbar_q_min_singular", r.kbar_q_min_singular},
                    {"kbar_q_condition", r.kbar_q_condition},
                    {"index2_min_singular", r.index2_min_singular}};
  out << report.dump() << "\n";
  if (!cfg.out.empty()) write_json(output_dir(cfg) / "index.json", report);
  return 0;
}

// ---------------------------------------------------------------- decouple

json verification_json(const VerificationReport& v) {
  return json{{"pass", v.pass},
              {"samples", v.samples},
              {"min_mass_tilde", v.min_mass_tilde},
              {"min_kbar_q", v.min_kbar_q},
              {"min_vmq", v.min_vmq},
              {"min_wkq", v.min_wkq},
              {"min_wkp", v.min_wkp},
              {"max_kernel_residual", v.max_kernel_residual},
              {"diagnostics", v.diagnostics}};
}

int cmd_decouple(const RunConfig& cfg, std::ostream& out) {
  const Source s = load_source(cfg);
  const DaeSystem sys = build_dae(s.circuit);
  const DecouplingL1 l1 = decouple_level1(sys);
  const auto samples = default_samples(sys, 20);
  json report{{"source", s.label}, {"state", sys.layout.names}};
  report["level1"] = json{{"differential", l1.differential_names},
                          {"algebraic", l1.algebraic_names},
                          {"topological", l1.topological},
                          {"right", basis_json(l1.right)},
                          {"left", basis_json(l1.left)}};
  std::optional<DecouplingL2> l2;
  try {
    l2 = decouple_level2(l1);
  } catch (const WrongIndex&) {
  }
  if (l2) {
    report["index"] = 2;
    report["level2"] = json{{"xtq", l2->xtq_names},
                            {"xtp", l2->xtp_names},
                            {"xbp", l2->xbp_names},
                            {"xbq", l2->xbq_names},
                            {"bar", basis_json(l2->bar)},
                            {"bar_left", basis_json(l2->bar_left)},
                            {"tilde", basis_json(l2->tilde)},
                            {"tilde_left", basis_json(l2->tilde_left)}};
    report["verification"] = verification_json(verify_decoupling(*l2, samples));
  } else {
    report["index"] = 1;
    report["verification"] = verification_json(verify_decoupling(l1, samples));
  }
  out << report.dump() << "\n";
  if (!cfg.out.empty()) write_json(output_dir(cfg) / "decoupling.json", report);
  return 0;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  const Source s = load_source(cfg);
  const double t_end = require(first(cfg.t_end, preset_value(s, &ExperimentPreset::t_end)), "--tend");
  const double step = require(first(cfg.step, preset_value(s, &ExperimentPreset::step)), "--step");
  const Method method = parse_method(cfg.method);
  const Vector p = parameter_point(s, cfg);
  const DaeSystem sys = build_dae(s.circuit);
  const std::vector<double> grid = uniform_grid(0.0, t_end, step);
  const Vector x0 = consistent_initial(sys, Vector::Zero(static_cast<Index>(sys.size())), 0.0, p);

  Trajectory tr;
  if (cfg.reduced) {
    const DecouplingL1 l1 = decouple_level1(sys);
    std::optional<DecouplingL2> l2;
    try {
      l2 = decouple_level2(l1);
    } catch (const WrongIndex&) {
    }
    tr = l2 ? integrate_reduced_ode(*l2, l2->split(x0).xtq, grid, p) : integrate_reduced_ode(l1, l1.split(x0).complement_part, grid, p);
  } else {
    tr = integrate_dae(sys, x0, grid, p, {}, method);
  }

  std::vector<std::string> header{"t"};
  header.insert(header.end(), tr.names.begin(), tr.names.end());
  Matrix values(tr.states.rows(), tr.states.cols() + 1);
  for (Index k = 0; k < tr.states.rows(); ++k) {
    values(k, 0) = tr.times[static_cast<std::size_t>(k)];
    values.row(k).tail(tr.states.cols()) = tr.states.row(k);
  }
  const fs::path dir = output_dir(cfg);
  write_csv((dir / "trajectory.csv").string(), numeric_table(header, values));
  out << json{{"trajectory", (dir / "trajectory.csv").string()},
              {"points", tr.size()},
              {"method", tr.method},
              {"newton_iterations", tr.newton_iterations},
              {"subdivided_steps", tr.subdivided_steps}}
             .dump()
      << "\n";
  return 0;
}

// ---------------------------------------------------------------- learn

struct LearnSetup {
  Source source;
  LearnProblem problem;
  LearnConfig learn;
  Vector probe;
  std::size_t times = kDefaultTimes;
  std::vector<std::size_t> points;
  double t_end = 0.0;
};

const std::set<std::string> kConfigKeys{"tolerance", "max_samples", "variables", "comparison", "seed",
                                        "full_refit_every", "times", "points", "t_end", "step", "method",
                                        "threads", "cache", "fit"};

FitOptions fit_options(const json& j) {
  FitOptions fit;
  for (const auto& [key, value] : j.items()) {
    if (key == "starts") fit.starts = value.get<int>();
    else if (key == "noise_floor") fit.noise_floor = value.get<double>();
    else if (key == "search_limit") fit.search_limit = value.get<double>();
    else if (key == "max_evaluations") fit.max_evaluations = value.get<int>();
    else if (key == "standardize") fit.standardize = value.get<bool>();
    else throw Error("invalid-config", "unknown fit option '" + key + "'");
  }
  return fit;
}

LearnSetup learn_setup(const RunConfig& cfg, RunConfig& effective) {
  LearnSetup s{load_source(cfg), {}, {}, {}, kDefaultTimes, {}, 0.0};
  json file = cfg.config.empty() ? json::object() : load_json(cfg.config);
  if (!file.is_object()) throw Error("invalid-config", "the learn config must be a JSON object");
  for (const auto& [key, value] : file.items()) {
    if (!kConfigKeys.count(key)) throw Error("invalid-config", "unknown config key '" + key + "'");
  }
  auto number = [&](const char* key) -> std::optional<double> {
    if (!file.contains(key)) return std::nullopt;
    return file[key].get<double>();
  };
  try {
    const auto& preset = s.source.preset;
    s.t_end = require(first(cfg.t_end, first(number("t_end"), preset_value(s.source, &ExperimentPreset::t_end))),
                      "--tend");
    const double step =
        require(first(cfg.step, first(number("step"), preset_value(s.source, &ExperimentPreset::step))), "--step");
    const std::string method = file.value("method", cfg.method);
    s.times = cfg.times ? *cfg.times : file.value("times", kDefaultTimes);
    s.points = !cfg.points.empty() ? cfg.points : file.value("points", std::vector<std::size_t>{});
    if (s.points.empty()) s.points.assign(s.source.circuit.parameter_space.size(), kDefaultPoints);
    if (s.points.size() != s.source.circuit.parameter_space.size()) {
      throw Error("invalid-config", "one grid size per parameter is required");
    }

    LearnConfig& lc = s.learn;
    lc.tolerance = require(first(cfg.tolerance, first(number("tolerance"), preset_value(s.source, &ExperimentPreset::tolerance))),
                           "--tol");
    lc.max_samples = file.value("max_samples", lc.max_samples);
    lc.variables = file.value("variables", preset ? preset->learned : std::vector<std::string>{});
    lc.comparison = file.value("comparison", preset ? preset->comparison : std::vector<std::string>{});
    lc.seed = effective.seed;
    if (file.contains("seed") && !effective.seed_given) lc.seed = file["seed"].get<std::uint64_t>();
    lc.full_refit_every = file.value("full_refit_every", lc.full_refit_every);
    if (file.contains("fit")) lc.fit = fit_options(file["fit"]);
    if (file.contains("threads") && !effective.threads_given) effective.threads = file["threads"].get<unsigned>();
    if (file.contains("cache") && effective.cache.empty()) effective.cache = file["cache"].get<std::string>();

    DesignGrid grid = DesignGrid::uniform(s.source.circuit.parameter_space, 0.0, s.t_end, s.times, s.points);
    s.problem = LearnProblem::create(s.source.circuit, std::move(grid), step, parse_method(method));
    if (lc.variables.empty()) lc.variables = s.problem.differential_names();
  } catch (const json::exception& e) {
    throw Error("invalid-config", std::string("learn config: ") + e.what());
  }
  s.probe = parameter_point(s.source, cfg);
  return s;
}

json hyper_json(const Hyperparameters& h) {
  json lengths = json::array();
  for (Index d = 0; d < h.dimension(); ++d) lengths.push_back(h.length(d));
  return json{{"noise", h.noise()}, {"signal", h.signal()}, {"lengths", lengths}};
}

CsvTable history_table(const VariableModel& m, const std::vector<std::string>& parameter_names) {
  CsvTable t;
  t.header = {"iteration", "t"};
  t.header.insert(t.header.end(), parameter_names.begin(), parameter_names.end());
  for (const char* c : {"e", "provenance", "value", "distinct_combinations", "simulated_combinations"}) {
    t.header.push_back(c);
  }
  for (const auto& r : m.history.records) {
    std::vector<std::string> row{std::to_string(r.iteration), format_number(r.t)};
    for (Index i = 0; i < r.p.size(); ++i) row.push_back(format_number(r.p(i)));
    row.push_back(format_number(r.error));
    row.push_back(to_string(r.provenance));
    row.push_back(format_number(r.value));
    row.push_back(std::to_string(r.distinct_combinations));
    row.push_back(std::to_string(r.simulated_combinations));
    t.rows.push_back(std::move(row));
  }
  return t;
}

int cmd_learn(const RunConfig& cfg, std::ostream& out) {
  RunConfig effective = cfg;
  LearnSetup s = learn_setup(cfg, effective);
  const GroundTruth truth = GroundTruth::compute(s.problem, effective.threads, effective.cache);
  const std::vector<VariableModel> models = run_active_learning(s.problem, truth, s.learn);

  const fs::path dir = output_dir(cfg);
  const auto parameter_names = s.source.circuit.parameter_names();
  json variables = json::array();
  for (const auto& m : models) {
    const std::string stem = safe_name(m.variable);
    write_json(dir / ("model_" + stem + ".json"),
               json{{"variable", m.variable},
                    {"functional", vector_json(m.functional)},
                    {"gp", json::parse(m.model.to_json())}});
    write_csv((dir / ("history_" + stem + ".csv")).string(), history_table(m, parameter_names));
    const SampleRecord& last = m.history.records.back();
    variables.push_back(json{{"variable", m.variable},
                             {"final_error", m.history.final_error},
                             {"converged", m.history.converged},
                             {"budget_exceeded", m.history.budget_exceeded},
                             {"samples", m.history.records.size()},
                             {"distinct_combinations", last.distinct_combinations},
                             {"simulated_combinations", last.simulated_combinations},
                             {"hyperparameters", hyper_json(m.model.hyper())},
                             {"fallback", m.model.fallback}});
  }
  const json summary{{"source", s.source.label},
                     {"experiment", cfg.experiment},
                     {"netlist", to_netlist(s.source.circuit)},
                     {"index", s.problem.index()},
                     {"parameters", parameter_names},
                     {"ae_only", s.problem.ae_only},
                     {"probe", vector_json(s.probe)},
                     {"t_end", s.t_end},
                     {"times", s.times},
                     {"points", s.points},
                     {"step", s.problem.step},
                     {"method", to_string(s.problem.method)},
                     {"tolerance", s.learn.tolerance},
                     {"seed", s.learn.seed},
                     {"ground_truth_simulations", truth.simulations() + truth.cache_hits()},
                     {"variables", variables}};
  write_json(dir / "summary.json", summary);
  out << json{{"summary", (dir / "summary.json").string()}, {"variables", models.size()}}.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- reconstruct

int cmd_reconstruct(const RunConfig& cfg, std::ostream& out) {
  if (cfg.predictions.empty()) throw CLI::ValidationError("--predictions is required");
  const Source s = load_source(cfg);
  const double step = require(first(cfg.step, preset_value(s, &ExperimentPreset::step)), "--step");
  const CsvTable table = read_csv(cfg.predictions);
  const Vector times_v = table.numeric_column("t");
  const std::vector<double> times(times_v.data(), times_v.data() + times_v.size());
  if (times.empty()) throw Error("invalid-csv", "the predictions file has no rows");

  DesignGrid grid;
  grid.times = times;
  grid.space = s.circuit.parameter_space;
  grid.parameters = {s.circuit.nominal_parameters()};
  const LearnProblem problem = LearnProblem::create(s.circuit, grid, step, parse_method(cfg.method));
  const Vector p = parameter_point(s, cfg);

  // A coordinate is read from its own column or, when the file holds full
  // states, evaluated from them through its functional.
  const auto& state_names = problem.system.layout.names;
  auto has = [&](const std::string& n) { return std::count(table.header.begin(), table.header.end(), n) > 0; };
  const bool full_states = std::all_of(state_names.begin(), state_names.end(), has);
  Matrix state_values;
  if (full_states) {
    state_values.resize(static_cast<Index>(times.size()), static_cast<Index>(state_names.size()));
    for (std::size_t i = 0; i < state_names.size(); ++i) {
      state_values.col(static_cast<Index>(i)) = table.numeric_column(state_names[i]);
    }
  }
  auto coordinate = [&](const std::string& n) -> Vector {
    if (has(n) || !full_states) return table.numeric_column(n);
    return state_values * problem.functional(n);
  };
  auto available = [&](const std::string& n) { return has(n) || full_states; };

  const auto diff_names = problem.differential_names();
  Matrix differential(static_cast<Index>(times.size()), static_cast<Index>(diff_names.size()));
  for (std::size_t i = 0; i < diff_names.size(); ++i) differential.col(static_cast<Index>(i)) = coordinate(diff_names[i]);
  std::vector<double> e_bar;
  const Matrix states = problem.reconstruct_series(times, differential, p, &e_bar);

  // ê needs a value for every coordinate; NaN otherwise.
  const auto all_names = problem.coordinate_names();
  std::vector<double> e_hat(times.size(), std::nan(""));
  if (std::all_of(all_names.begin(), all_names.end(), available)) {
    Matrix coords(static_cast<Index>(times.size()), static_cast<Index>(all_names.size()));
    for (std::size_t i = 0; i < all_names.size(); ++i) coords.col(static_cast<Index>(i)) = coordinate(all_names[i]);
    e_hat = problem.series_consistency(times, coords, p);
  }

  const fs::path dir = output_dir(cfg);
  std::vector<std::string> header{"t"};
  header.insert(header.end(), problem.system.layout.names.begin(), problem.system.layout.names.end());
  Matrix full(states.rows(), states.cols() + 1);
  Matrix consistency(states.rows(), 3);
  for (Index k = 0; k < states.rows(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    full(k, 0) = times[i];
    full.row(k).tail(states.cols()) = states.row(k);
    consistency.row(k) << times[i], e_hat[i], e_bar[i];
  }
  write_csv((dir / "states.csv").string(), numeric_table(header, full));
  write_csv((dir / "consistency.csv").string(), numeric_table({"t", "e_hat", "e_bar"}, consistency));
  out << json{{"states", (dir / "states.csv").string()}, {"consistency", (dir / "consistency.csv").string()}}.dump()
      << "\n";
  return 0;
}

// ---------------------------------------------------------------- report

int cmd_report(const RunConfig& cfg, std::ostream& out) {
  const fs::path models_dir = cfg.models.empty() ? fs::path(cfg.out.empty() ? "." : cfg.out) : fs::path(cfg.models);
  const json summary = load_json((models_dir / "summary.json").string());
  std::vector<VariableModel> models;
  CircuitGraph circuit;
  LearnProblem problem;
  Vector p;
  try {
    circuit = parse_netlist(summary.at("netlist").get<std::string>());
    DesignGrid grid = DesignGrid::uniform(circuit.parameter_space, 0.0, summary.at("t_end").get<double>(),
                                          summary.at("times").get<std::size_t>(),
                                          summary.at("points").get<std::vector<std::size_t>>());
    problem = LearnProblem::create(circuit, std::move(grid), summary.at("step").get<double>(),
                                   parse_method(summary.at("method").get<std::string>()));
    p = parameter_point(circuit, json_vector(summary.at("probe")), cfg);
    for (const auto& v : summary.at("variables")) {
      const std::string name = v.at("variable").get<std::string>();
      const json m = load_json((models_dir / ("model_" + safe_name(name) + ".json")).string());
      VariableModel vm;
      vm.variable = name;
      vm.functional = json_vector(m.at("functional"));
      vm.model = GpModel::from_json(m.at("gp").dump());
      models.push_back(std::move(vm));
    }
  } catch (const json::exception& e) {
    throw Error("invalid-config", std::string("learn outputs: ") + e.what());
  }

  const fs::path dir = output_dir(cfg);
  const std::vector<double>& times = problem.grid.times;
  const ConsistencyReport rep = consistency_report(problem, models, p, times);
  Matrix consistency(static_cast<Index>(times.size()), 3);
  Matrix predictions(static_cast<Index>(times.size()), static_cast<Index>(1 + 2 * models.size()));
  std::vector<std::string> pred_header{"t"};
  for (const auto& m : models) {
    pred_header.push_back(m.variable);
    pred_header.push_back(m.variable + "_std");
  }
  for (std::size_t k = 0; k < times.size(); ++k) {
    const auto row = static_cast<Index>(k);
    consistency.row(row) << times[k], rep.learned[k], rep.reconstructed[k];
    Vector u(1 + p.size());
    u << times[k], p;
    predictions(row, 0) = times[k];
    for (std::size_t i = 0; i < models.size(); ++i) {
      const Prediction pr = models[i].model.predict(u);
      predictions(row, static_cast<Index>(1 + 2 * i)) = pr.mean;
      predictions(row, static_cast<Index>(2 + 2 * i)) = std::sqrt(pr.variance);
    }
  }
  write_csv((dir / "consistency.csv").string(), numeric_table({"t", "e_hat", "e_bar"}, consistency));
  write_csv((dir / "predictions.csv").string(), numeric_table(pred_header, predictions));

  // Error against training-set size, one file per variable.
  for (const auto& m : models) {
    const std::string stem = safe_name(m.variable);
    const CsvTable history = read_csv((models_dir / ("history_" + stem + ".csv")).string());
    CsvTable curve;
    curve.header = {"samples", "distinct_combinations", "simulated_combinations", "e"};
    const std::size_t e = history.column("e");
    const std::size_t distinct = history.column("distinct_combinations");
    const std::size_t simulated = history.column("simulated_combinations");
    for (std::size_t r = 0; r < history.rows.size(); ++r) {
      curve.rows.push_back({std::to_string(r + 1), history.rows[r][distinct], history.rows[r][simulated],
                            history.rows[r][e]});
    }
    write_csv((dir / ("errors_" + stem + ".csv")).string(), curve);
  }
  // NaN (a coordinate without a model) propagates into the maximum.
  auto maximum = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::isnan(x) || std::isnan(m) ? std::nan("") : std::max(m, x);
    return m;
  };
  const double max_hat = maximum(rep.learned);
  const double max_bar = maximum(rep.reconstructed);
  out << json{{"consistency", (dir / "consistency.csv").string()}, {"max_e_hat", max_hat}, {"max_e_bar", max_bar}}
             .dump()
      << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dissection-index decoupling and active learning for circuit DAEs", "dissect-circ"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::vector<std::string> params;

  auto source_flags = [&](CLI::App* sub) {
    sub->add_option("--netlist", cfg.netlist, "Netlist file");
    sub->add_option("--fixture", cfg.fixture, "Built-in circuit")->check(CLI::IsMember(fixture_names()));
    sub->add_option("--paper-experiment", cfg.experiment, "Preset experiment")->check(CLI::IsMember(experiment_names()));
    sub->add_option("--out", cfg.out, "Output directory");
  };
  auto sim_flags = [&](CLI::App* sub) {
    sub->add_option("--tend", cfg.t_end, "End time in seconds");
    sub->add_option("--step", cfg.step, "Integration step in seconds");
    sub->add_option("--method", cfg.method, "implicit-euler or trapezoidal");
    sub->add_option("--param", params, "Parameter value NAME=VALUE");
  };
  app.add_option("--seed", cfg.seed, "Random seed");
  app.add_option("--threads", cfg.threads, "Worker threads for ground-truth simulations");
  app.add_option("--tol", cfg.tolerance, "Learning tolerance");

  auto* parse = app.add_subcommand("parse", "Parse and validate a netlist");
  auto* index = app.add_subcommand("index", "Report the DAE index");
  auto* decouple = app.add_subcommand("decouple", "Decouple and verify");
  auto* simulate = app.add_subcommand("simulate", "Transient simulation");
  auto* learn = app.add_subcommand("learn", "Active learning of GP surrogates");
  auto* reconstruct = app.add_subcommand("reconstruct", "Recover full states from differential predictions");
  auto* report = app.add_subcommand("report", "Consistency and convergence data from learned models");
  for (auto* sub : {parse, index, decouple, simulate, learn, reconstruct, report}) {
    sub->add_option("--seed", cfg.seed, "Random seed");
    sub->add_option("--threads", cfg.threads, "Worker threads");
    sub->add_option("--tol", cfg.tolerance, "Learning tolerance");
  }
  for (auto* sub : {parse, index, decouple, simulate, learn, reconstruct}) source_flags(sub);
  for (auto* sub : {simulate, learn, reconstruct}) sim_flags(sub);
  simulate->add_flag("--reduced", cfg.reduced, "Integrate the reduced ODE");
  learn->add_option("--config", cfg.config, "JSON learn configuration");
  learn->add_option("--cache", cfg.cache, "Ground-truth cache directory");
  learn->add_option("--times", cfg.times, "Number of grid times");
  learn->add_option("--points", cfg.points, "Grid points per parameter")->delimiter(',');
  reconstruct->add_option("--predictions", cfg.predictions, "CSV with t and the differential coordinates");
  report->add_option("--models", cfg.models, "Directory written by learn");
  report->add_option("--out", cfg.out, "Output directory");
  report->add_option("--param", params, "Parameter value NAME=VALUE");

  try {
    app.parse(argc, argv);
    for (const auto& p : params) {
      const auto eq = p.find('=');
      if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--param expects NAME=VALUE, got '" + p + "'");
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(p.substr(eq + 1), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != p.size() - eq - 1) throw CLI::ValidationError("--param value is not a number: " + p);
      cfg.parameters.emplace_back(p.substr(0, eq), value);
    }
    cfg.seed_given = app.count("--seed") > 0;
    cfg.threads_given = app.count("--threads") > 0;
    for (auto* sub : app.get_subcommands()) {
      cfg.subcommand = sub->get_name();
      cfg.seed_given = cfg.seed_given || sub->count("--seed") > 0;
      cfg.threads_given = cfg.threads_given || sub->count("--threads") > 0;
    }
    if (!cfg.threads_given) cfg.threads = std::max(1u, std::thread::hardware_concurrency());
    if (cfg.threads == 0) throw CLI::ValidationError("--threads must be at least 1");

    if (cfg.subcommand == "parse") return cmd_parse(cfg, out);
    if (cfg.subcommand == "index") return cmd_index(cfg, out);
    if (cfg.subcommand == "decouple") return cmd_decouple(cfg, out);
    if (cfg.subcommand == "simulate") return cmd_simulate(cfg, out);
    if (cfg.subcommand == "learn") return cmd_learn(cfg, out);
    if (cfg.subcommand == "reconstruct") return cmd_reconstruct(cfg, out);
    return cmd_report(cfg, out);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << nlohmann::json{{"error", e.kind()}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace dissect::cli
