#include "dissect/active.hpp"

#include "dissect/errors.hpp"
#include "dissect/recover.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

namespace dissect {

DesignGrid DesignGrid::uniform(const std::vector<ParameterRange>& space, double t0, double t_end, std::size_t n_times,
                               const std::vector<std::size_t>& points) {
  if (points.size() != space.size()) throw DimensionMismatch("one point count per parameter is required");
  DesignGrid g;
  g.space = space;
  if (n_times == 0) throw Error("invalid-argument", "time grid needs at least one point");
  for (std::size_t k = 0; k < n_times; ++k) {
    g.times.push_back(n_times == 1 ? t0 : t0 + (t_end - t0) * static_cast<double>(k) / static_cast<double>(n_times - 1));
  }
  std::vector<std::vector<double>> axes;
  for (std::size_t d = 0; d < space.size(); ++d) {
    if (points[d] == 0) throw Error("invalid-argument", "parameter grid needs at least one point per range");
    std::vector<double> axis;
    for (std::size_t k = 0; k < points[d]; ++k) {
      const double w = points[d] == 1 ? 0.5 : static_cast<double>(k) / static_cast<double>(points[d] - 1);
      axis.push_back(space[d].lower + w * (space[d].upper - space[d].lower));
    }
    axes.push_back(axis);
  }
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.size();
  for (std::size_t flat = 0; flat < total; ++flat) {
    Vector p(static_cast<Index>(space.size()));
    std::size_t rest = flat;
    for (std::size_t d = space.size(); d-- > 0;) {
      p(static_cast<Index>(d)) = axes[d][rest % axes[d].size()];
      rest /= axes[d].size();
    }
    g.parameters.push_back(p);
  }
  g.validate();
  return g;
}

Vector DesignGrid::input(std::size_t ti, std::size_t pi) const {
  const Vector& p = parameters.at(pi);
  Vector u(1 + p.size());
  u << times.at(ti), p;
  return u;
}

Matrix DesignGrid::inputs() const {
  const Index dim = 1 + (parameters.empty() ? 0 : parameters.front().size());
  Matrix m(dim, static_cast<Index>(size()));
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    for (std::size_t pi = 0; pi < parameters.size(); ++pi) m.col(static_cast<Index>(flat(ti, pi))) = input(ti, pi);
  }
  return m;
}

void DesignGrid::validate() const {
  if (times.empty() || parameters.empty()) throw Error("invalid-grid", "design grid is empty");
  for (double t : times) {
    if (!std::isfinite(t)) throw Error("invalid-grid", "time grid has non-finite entries");
  }
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) throw Error("invalid-grid", "time grid must be strictly increasing");
  }
  for (const auto& p : parameters) {
    if (static_cast<std::size_t>(p.size()) != space.size() || !p.allFinite()) {
      throw Error("invalid-grid", "parameter grid entry is malformed");
    }
  }
}

std::vector<std::pair<std::size_t, std::size_t>> init_design(const DesignGrid& grid, InitialDesign) {
  grid.validate();
  const std::size_t np = grid.space.size();
  std::vector<std::pair<std::size_t, std::size_t>> design;
  for (std::size_t mask = 0; mask < (std::size_t{1} << np); ++mask) {
    Vector corner(static_cast<Index>(np));
    for (std::size_t d = 0; d < np; ++d) {
      const bool upper = (mask >> (np - 1 - d)) & 1U;
      corner(static_cast<Index>(d)) = upper ? grid.space[d].upper : grid.space[d].lower;
    }
    std::size_t found = grid.parameters.size();
    for (std::size_t pi = 0; pi < grid.parameters.size(); ++pi) {
      const Vector& p = grid.parameters[pi];
      bool same = true;
      for (std::size_t d = 0; d < np; ++d) {
        const double scale = std::max(std::abs(grid.space[d].upper - grid.space[d].lower), 1e-300);
        same = same && std::abs(p(static_cast<Index>(d)) - corner(static_cast<Index>(d))) <= 1e-12 * scale;
      }
      if (same) {
        found = pi;
        break;
      }
    }
    if (found == grid.parameters.size()) throw Error("invalid-grid", "parameter grid does not contain every corner");
    for (std::size_t ti : {std::size_t{0}, grid.times.size() - 1}) {
      const std::pair<std::size_t, std::size_t> s{ti, found};
      if (std::find(design.begin(), design.end(), s) == design.end()) design.push_back(s);
    }
  }
  return design;
}

double relative_error(const Vector& predictions, const Vector& truth) {
  if (predictions.size() != truth.size()) throw DimensionMismatch("predictions and truth differ in length");
  const double norm = truth.norm();
  if (!(norm > 0.0)) throw ZeroTruthNorm();
  return (predictions - truth).norm() / norm;
}

std::pair<std::size_t, std::size_t> select_next(const GpModel& model, const DesignGrid& grid,
                                                const std::vector<bool>& in_design) {
  if (in_design.size() != grid.size()) throw DimensionMismatch("design mask does not match the grid");
  Vector mean, variance;
  model.predict_many(grid.inputs(), mean, variance);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!in_design[k]) best = std::max(best, variance(static_cast<Index>(k)));
  }
  if (best == -std::numeric_limits<double>::infinity()) throw GridExhausted();
  const double cutoff = best - 1e-12 * std::abs(best);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!in_design[k] && variance(static_cast<Index>(k)) >= cutoff) {
      return {k / grid.parameters.size(), k % grid.parameters.size()};
    }
  }
  throw GridExhausted();
}

Vector state_functional(const StateLayout& layout, const std::string& name) {
  Vector c = Vector::Zero(static_cast<Index>(layout.size()));
  if (const auto k = layout.index_of(name)) {
    c(static_cast<Index>(*k)) = 1.0;
    return c;
  }
  if (name.rfind("v_", 0) == 0) {
    const auto sep = name.find('_', 2);
    if (sep != std::string::npos) {
      const std::string a = name.substr(2, sep - 2);
      const std::string b = name.substr(sep + 1);
      const auto ia = layout.index_of("phi" + a);
      const auto ib = layout.index_of("phi" + b);
      if ((ia || a == "0") && (ib || b == "0")) {
        if (ia) c(static_cast<Index>(*ia)) += 1.0;
        if (ib) c(static_cast<Index>(*ib)) -= 1.0;
        return c;
      }
    }
  }
  throw Error("unknown-variable", "no state quantity named '" + name + "'");
}

namespace {

// Probes on the trajectory at the nominal parameters. Random states of
// small magnitude can leave diodes off throughout, which hides the
// parameters they carry; a simulated trajectory passes through every
// conduction state the circuit reaches. Empty when the simulation fails.
std::vector<Probe> operating_probes(const LearnProblem& lp, const Matrix& map, std::size_t count) {
  const Vector p = lp.circuit.nominal_parameters();
  const double t0 = lp.grid.times.front(), t_end = lp.grid.times.back();
  std::vector<Probe> probes;
  try {
    const Vector x0 = consistent_initial(lp.system, Vector::Zero(static_cast<Index>(lp.system.size())), t0, p, lp.newton);
    const Trajectory tr = integrate_dae(lp.system, x0, uniform_grid(t0, t_end, lp.step), p, lp.newton, lp.method);
    const Index last = tr.states.rows() - 1;
    for (std::size_t k = 1; k <= count && last > 0; ++k) {
      const Index i = std::max<Index>(1, static_cast<Index>(k) * last / static_cast<Index>(count));
      const double h = tr.times[static_cast<std::size_t>(i)] - tr.times[static_cast<std::size_t>(i - 1)];
      Probe pr;
      pr.t = tr.times[static_cast<std::size_t>(i)];
      pr.differential = map * tr.states.row(i).transpose();
      pr.rate = (pr.differential - map * tr.states.row(i - 1).transpose()) / h;
      pr.state = tr.states.row(i).transpose();
      probes.push_back(std::move(pr));
    }
  } catch (const Error&) {
    probes.clear();
  }
  return probes;
}

}  // namespace

LearnProblem LearnProblem::create(const CircuitGraph& circuit, DesignGrid grid, double step, Method method,
                                  const NewtonConfig& newton) {
  grid.validate();
  if (!(step > 0.0)) throw Error("invalid-argument", "integration step must be positive");
  LearnProblem lp;
  lp.circuit = circuit;
  lp.system = build_dae(circuit);
  lp.level1 = decouple_level1(lp.system);
  try {
    lp.level2 = decouple_level2(lp.level1);
  } catch (const WrongIndex&) {
    lp.level2.reset();
  }
  lp.grid = std::move(grid);
  lp.step = step;
  lp.method = method;
  lp.newton = newton;
  const double t_end = lp.grid.times.back();
  const Matrix& map = lp.level2 ? lp.level2->xtq_map : lp.level1.differential_map;
  std::vector<Probe> probes = operating_probes(lp, map, 16);
  const auto random = default_probes(map.rows(), t_end, 8);
  probes.insert(probes.end(), random.begin(), random.end());
  lp.ae_only = lp.level2 ? ae_only_parameters(*lp.level2, circuit.parameter_space, probes, newton)
                         : ae_only_parameters(lp.level1, circuit.parameter_space, probes, newton);
  return lp;
}

std::vector<std::string> LearnProblem::differential_names() const {
  return level2 ? level2->xtq_names : level1.differential_names;
}

std::vector<std::string> LearnProblem::coordinate_names() const {
  std::vector<std::string> names;
  auto append = [&](const std::vector<std::string>& v) { names.insert(names.end(), v.begin(), v.end()); };
  if (level2) {
    append(level2->xtq_names);
    append(level2->xtp_names);
    append(level2->xbp_names);
    append(level2->xbq_names);
  } else {
    append(level1.differential_names);
    append(level1.algebraic_names);
  }
  return names;
}

Vector LearnProblem::functional(const std::string& name) const {
  auto lookup = [&](const std::vector<std::string>& names, const Matrix& map) -> std::optional<Vector> {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return Vector(map.row(static_cast<Index>(i)).transpose());
    }
    return std::nullopt;
  };
  std::optional<Vector> c;
  if (level2) {
    if (!c) c = lookup(level2->xtq_names, level2->xtq_map);
    if (!c) c = lookup(level2->xtp_names, level2->xtp_map);
    if (!c) c = lookup(level2->xbp_names, level2->xbp_map);
    if (!c) c = lookup(level2->xbq_names, level2->xbq_map);
  } else {
    if (!c) c = lookup(level1.differential_names, level1.differential_map);
    if (!c) c = lookup(level1.algebraic_names, level1.algebraic_map);
  }
  return c ? *c : state_functional(system.layout, name);
}

Vector LearnProblem::reconstruct(const Vector& now, const Vector& next, double t, const Vector& p) const {
  if (level2) {
    const Level2Parts a = level2->split(now);
    const Level2Parts b = level2->split(next);
    const Index2Recovery r = recover_index2(*level2, a.xtq, b.xtq, t, step, p, newton, &a);
    return level2->state(r.parts);
  }
  const auto s = level1.split(now);
  const Vector xb = recover_index1(level1, s.complement_part, t, p, newton, s.kernel_part);
  return level1.state(s.complement_part, xb);
}

Matrix LearnProblem::reconstruct_series(const std::vector<double>& times, const Matrix& differential, const Vector& p,
                                       std::vector<double>* consistency) const {
  const Index rows = static_cast<Index>(times.size());
  if (differential.rows() != rows) throw DimensionMismatch("one row of differential coordinates per time is required");
  Matrix states(rows, static_cast<Index>(system.size()));
  if (consistency) consistency->assign(times.size(), 0.0);
  if (!level2) {
    if (differential.cols() != level1.differential_size()) throw DimensionMismatch("wrong number of coordinates");
    Vector guess = Vector::Zero(level1.algebraic_size());
    for (Index k = 0; k < rows; ++k) {
      const double t = times[static_cast<std::size_t>(k)];
      const Vector xt = differential.row(k).transpose();
      guess = recover_index1(level1, xt, t, p, newton, guess);
      const Vector x = level1.state(xt, guess);
      states.row(k) = x.transpose();
      if (consistency) (*consistency)[static_cast<std::size_t>(k)] = consistency_error(level1, x, t, p);
    }
    return states;
  }
  const DecouplingL2& d = *level2;
  if (differential.cols() != d.dim_xtq()) throw DimensionMismatch("wrong number of coordinates");
  std::vector<Level2Parts> parts(times.size());
  Level2Parts guess{Vector(), Vector::Zero(d.dim_xtp()), Vector::Zero(d.dim_xbp()), Vector::Zero(d.dim_xbq())};
  for (Index k = 0; k < rows; ++k) {
    guess.xtq = differential.row(k).transpose();
    guess.xtp = solve_xtp(d, guess, times[static_cast<std::size_t>(k)], p, newton);
    parts[static_cast<std::size_t>(k)] = guess;
  }
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double t = times[k];
    Vector rate;
    if (times.size() == 1) {
      Level2Parts ahead = parts[k];
      ahead.xtp = solve_xtp(d, parts[k], t + step, p, newton);
      rate = (ahead.xtp - parts[k].xtp) / step;
    } else {
      const std::size_t a = k + 1 < times.size() ? k : k - 1;
      rate = (parts[a + 1].xtp - parts[a].xtp) / (times[a + 1] - times[a]);
    }
    if (k > 0) {
      parts[k].xbp = parts[k - 1].xbp;
      parts[k].xbq = parts[k - 1].xbq;
    }
    parts[k] = solve_xb_joint(d, parts[k], rate, t, p, newton);
    states.row(static_cast<Index>(k)) = d.state(parts[k]).transpose();
    if (consistency) (*consistency)[k] = consistency_error(d, parts[k], rate, t, p);
  }
  return states;
}

namespace {

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t truth_key(const LearnProblem& problem, const Vector& p, double sim_end) {
  std::uint64_t h = 14695981039346656037ULL;
  const std::string text = to_netlist(problem.circuit) + "|" + to_string(problem.method);
  h = fnv1a(text.data(), text.size(), h);
  h = fnv1a(p.data(), sizeof(double) * static_cast<std::size_t>(p.size()), h);
  h = fnv1a(&problem.step, sizeof(double), h);
  h = fnv1a(&sim_end, sizeof(double), h);
  h = fnv1a(problem.grid.times.data(), sizeof(double) * problem.grid.times.size(), h);
  const double tols[2] = {problem.newton.abs_tol, problem.newton.rel_tol};
  return fnv1a(tols, sizeof(tols), h);
}

std::string cache_path(const std::string& dir, std::uint64_t key) {
  char name[40];
  std::snprintf(name, sizeof(name), "truth-%016llx.bin", static_cast<unsigned long long>(key));
  return (std::filesystem::path(dir) / name).string();
}

bool read_cache(const std::string& path, Matrix& a, Matrix& b, Index rows, Index cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::int64_t dims[2] = {0, 0};
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] != rows || dims[1] != cols) return false;
  a.resize(rows, cols);
  b.resize(rows, cols);
  const auto bytes = static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rows * cols));
  in.read(reinterpret_cast<char*>(a.data()), bytes);
  in.read(reinterpret_cast<char*>(b.data()), bytes);
  return static_cast<bool>(in);
}

void write_cache(const std::string& path, const Matrix& a, const Matrix& b) {
  const std::string tmp = path + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write cache file " + tmp);
    const std::int64_t dims[2] = {a.rows(), a.cols()};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    const auto bytes = static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(a.size()));
    out.write(reinterpret_cast<const char*>(a.data()), bytes);
    out.write(reinterpret_cast<const char*>(b.data()), bytes);
    if (!out) throw IoError("cannot write cache file " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::vector<double> LearnProblem::series_consistency(const std::vector<double>& times, const Matrix& coordinates,
                                                     const Vector& p) const {
  const Index rows = static_cast<Index>(times.size());
  if (coordinates.rows() != rows) throw DimensionMismatch("one row of coordinates per time is required");
  if (coordinates.cols() != static_cast<Index>(coordinate_names().size())) {
    throw DimensionMismatch("wrong number of coordinates");
  }
  std::vector<double> out(times.size());
  if (!level2) {
    const Index n = level1.differential_size();
    for (Index k = 0; k < rows; ++k) {
      const Vector row = coordinates.row(k).transpose();
      const Vector x = level1.state(row.head(n), row.tail(row.size() - n));
      out[static_cast<std::size_t>(k)] = consistency_error(level1, x, times[static_cast<std::size_t>(k)], p);
    }
    return out;
  }
  const DecouplingL2& d = *level2;
  auto parts_of = [&](Index k) {
    const Vector row = coordinates.row(k).transpose();
    Index at = 0;
    auto take = [&](Index n) {
      const Vector v = row.segment(at, n);
      at += n;
      return v;
    };
    Level2Parts parts;
    parts.xtq = take(d.dim_xtq());
    parts.xtp = take(d.dim_xtp());
    parts.xbp = take(d.dim_xbp());
    parts.xbq = take(d.dim_xbq());
    return parts;
  };
  for (std::size_t k = 0; k < times.size(); ++k) {
    const Level2Parts parts = parts_of(static_cast<Index>(k));
    Vector rate = Vector::Zero(d.dim_xtp());
    if (times.size() > 1) {
      const std::size_t a = k + 1 < times.size() ? k : k - 1;
      rate = (parts_of(static_cast<Index>(a + 1)).xtp - parts_of(static_cast<Index>(a)).xtp) / (times[a + 1] - times[a]);
    }
    out[k] = consistency_error(d, parts, rate, times[k], p);
  }
  return out;
}

GroundTruth GroundTruth::compute(const LearnProblem& problem, unsigned threads, const std::string& cache_dir) {
  const auto& grid = problem.grid;
  grid.validate();
  const double t0 = grid.times.front();
  const std::vector<double> sim = uniform_grid(t0, grid.times.back() + problem.step, problem.step);
  std::vector<std::size_t> rows;
  for (double t : grid.times) {
    const double k = std::round((t - t0) / problem.step);
    const auto idx = static_cast<std::size_t>(k);
    if (std::abs(t0 + k * problem.step - t) > 1e-6 * problem.step || idx + 1 >= sim.size()) {
      throw Error("invalid-grid", "grid times must lie on the integration grid");
    }
    rows.push_back(idx);
  }
  if (!cache_dir.empty()) std::filesystem::create_directories(cache_dir);

  GroundTruth gt;
  gt.times_ = grid.times.size();
  const std::size_t count = grid.parameters.size();
  const Index n = static_cast<Index>(problem.system.size());
  gt.states_.resize(count);
  gt.next_.resize(count);
  std::vector<char> simulated(count, 0);
  std::atomic<std::size_t> cursor{0};
  std::exception_ptr failure;
  std::mutex failure_lock;

  auto worker = [&]() {
    for (std::size_t pi = cursor++; pi < count; pi = cursor++) {
      try {
        const Vector& p = grid.parameters[pi];
        std::string path;
        if (!cache_dir.empty()) {
          path = cache_path(cache_dir, truth_key(problem, p, sim.back()));
          if (read_cache(path, gt.states_[pi], gt.next_[pi], static_cast<Index>(rows.size()), n)) continue;
        }
        const Vector x0 = consistent_initial(problem.system, Vector::Zero(n), t0, p, problem.newton);
        const Trajectory tr = integrate_dae(problem.system, x0, sim, p, problem.newton, problem.method);
        Matrix a(static_cast<Index>(rows.size()), n), b(static_cast<Index>(rows.size()), n);
        for (std::size_t r = 0; r < rows.size(); ++r) {
          a.row(static_cast<Index>(r)) = tr.states.row(static_cast<Index>(rows[r]));
          b.row(static_cast<Index>(r)) = tr.states.row(static_cast<Index>(rows[r] + 1));
        }
        if (!path.empty()) write_cache(path, a, b);
        gt.states_[pi] = std::move(a);
        gt.next_[pi] = std::move(b);
        simulated[pi] = 1;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_lock);
        if (!failure) failure = std::current_exception();
        cursor = count;
      }
    }
  };
  const unsigned workers = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  gt.simulations_ = static_cast<std::size_t>(std::count(simulated.begin(), simulated.end(), 1));
  gt.cache_hits_ = count - gt.simulations_;
  return gt;
}

Vector GroundTruth::values(const Vector& functional) const {
  const std::size_t np = states_.size();
  Vector v(static_cast<Index>(times_ * np));
  for (std::size_t pi = 0; pi < np; ++pi) {
    const Vector col = states_[pi] * functional;
    for (std::size_t ti = 0; ti < times_; ++ti) v(static_cast<Index>(ti * np + pi)) = col(static_cast<Index>(ti));
  }
  return v;
}

std::string to_string(Provenance p) { return p == Provenance::Simulated ? "simulated" : "reconstructed"; }

void LearnConfig::validate(const DesignGrid& grid) const {
  if (!(tolerance > 0.0)) throw Error("invalid-config", "tolerance must be positive");
  if (max_samples < init_design(grid, rule).size()) {
    throw Error("invalid-config", "max_samples is smaller than the initial design");
  }
}

VariableModel learn_variable(const LearnProblem& problem, const GroundTruth& truth, const LearnConfig& cfg,
                             const std::string& variable) {
  const DesignGrid& grid = problem.grid;
  cfg.validate(grid);
  VariableModel out;
  out.variable = variable;
  out.functional = problem.functional(variable);
  out.history.variable = variable;
  const Vector reference = truth.values(out.functional);
  const Matrix inputs = grid.inputs();
  const std::size_t np = grid.parameters.size();

  std::vector<std::size_t> ae_index;
  for (const auto& name : problem.ae_only) {
    if (const auto i = problem.circuit.parameter_index(name)) ae_index.push_back(*i);
  }
  // Parameter points that differ only in AE-only coordinates share the
  // differential trajectory, so one simulation serves all of them.
  auto same_dynamics = [&](std::size_t a, std::size_t b) {
    const Vector& pa = grid.parameters[a];
    const Vector& pb = grid.parameters[b];
    for (Index d = 0; d < pa.size(); ++d) {
      const bool ae = std::find(ae_index.begin(), ae_index.end(), static_cast<std::size_t>(d)) != ae_index.end();
      if (!ae && pa(d) != pb(d)) return false;
    }
    return true;
  };

  std::vector<bool> in_design(grid.size(), false);
  std::vector<bool> simulated(np, false);
  std::vector<bool> used(np, false);
  std::vector<Observation> observations;

  auto acquire = [&](std::size_t ti, std::size_t pi) {
    SampleRecord rec;
    rec.time_index = ti;
    rec.parameter_index = pi;
    rec.t = grid.times[ti];
    rec.p = grid.parameters[pi];
    std::optional<std::size_t> donor;
    if (!simulated[pi] && !ae_index.empty()) {
      for (std::size_t q = 0; q < np && !donor; ++q) {
        if (simulated[q] && same_dynamics(q, pi)) donor = q;
      }
    }
    if (donor) {
      const Vector x = problem.reconstruct(truth.states(*donor).row(static_cast<Index>(ti)).transpose(),
                                           truth.next_states(*donor).row(static_cast<Index>(ti)).transpose(), rec.t,
                                           rec.p);
      rec.value = out.functional.dot(x);
      rec.provenance = Provenance::Reconstructed;
    } else {
      simulated[pi] = true;
      rec.value = reference(static_cast<Index>(grid.flat(ti, pi)));
      rec.provenance = Provenance::Simulated;
    }
    in_design[grid.flat(ti, pi)] = true;
    used[pi] = true;
    rec.distinct_combinations = static_cast<std::size_t>(std::count(used.begin(), used.end(), true));
    rec.simulated_combinations = static_cast<std::size_t>(std::count(simulated.begin(), simulated.end(), true));
    observations.push_back({grid.input(ti, pi), rec.value});
    return rec;
  };
  auto evaluate = [&](const GpModel& m) {
    Vector mean, variance;
    m.predict_many(inputs, mean, variance);
    return relative_error(mean, reference);
  };

  auto& records = out.history.records;
  for (const auto& [ti, pi] : init_design(grid, cfg.rule)) records.push_back(acquire(ti, pi));
  FitOptions fit = cfg.fit;
  out.model = fit_hyperparameters(observations, cfg.seed, fit);
  double error = evaluate(out.model);
  for (auto& r : records) {
    r.error = error;
    r.hyper = out.model.hyper();
  }

  for (std::size_t iteration = 1;; ++iteration) {
    if (error <= cfg.tolerance) {
      out.history.converged = true;
      break;
    }
    if (observations.size() >= cfg.max_samples ||
        std::find(in_design.begin(), in_design.end(), false) == in_design.end()) {
      out.history.budget_exceeded = true;
      break;
    }
    const auto [ti, pi] = select_next(out.model, grid, in_design);
    SampleRecord rec = acquire(ti, pi);
    rec.iteration = iteration;
    const Hyperparameters previous = out.model.hyper();
    fit = cfg.fit;
    fit.warm_start = &previous;
    const bool full = cfg.full_refit_every > 0 && iteration % static_cast<std::size_t>(cfg.full_refit_every) == 0;
    if (!full) fit.starts = 1;
    out.model = fit_hyperparameters(observations, cfg.seed + iteration, fit);
    error = evaluate(out.model);
    rec.error = error;
    rec.hyper = out.model.hyper();
    records.push_back(rec);
  }
  out.history.final_error = error;
  return out;
}

const VariableModel* find_model(const std::vector<VariableModel>& models, const std::string& name) {
  for (const auto& m : models) {
    if (m.variable == name) return &m;
  }
  return nullptr;
}

ConsistencyReport consistency_report(const LearnProblem& problem, const std::vector<VariableModel>& models,
                                     const Vector& p, const std::vector<double>& times) {
  auto predict = [&](const std::vector<std::string>& names, double t, bool& complete) {
    Vector v(static_cast<Index>(names.size()));
    Vector u(1 + p.size());
    u << t, p;
    for (std::size_t i = 0; i < names.size(); ++i) {
      const VariableModel* m = find_model(models, names[i]);
      if (!m) {
        complete = false;
        return Vector();
      }
      v(static_cast<Index>(i)) = m->model.predict(u).mean;
    }
    return v;
  };
  ConsistencyReport report;
  report.times = times;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double h = problem.step;
  if (!problem.level2) {
    const DecouplingL1& d = problem.level1;
    Vector guess = Vector::Zero(d.algebraic_size());
    for (double t : times) {
      bool diff_ok = true, all_ok = true;
      const Vector xt = predict(d.differential_names, t, diff_ok);
      if (!diff_ok) throw Error("missing-model", "a differential coordinate has no model");
      const Vector xb = predict(d.algebraic_names, t, all_ok);
      // Learned algebraic values, when present, only seed Newton; the
      // chained previous solution is the fallback.
      if (all_ok) {
        try {
          guess = recover_index1(d, xt, t, p, problem.newton, xb);
        } catch (const Error&) {
          guess = recover_index1(d, xt, t, p, problem.newton, guess);
        }
      } else {
        guess = recover_index1(d, xt, t, p, problem.newton, guess);
      }
      report.reconstructed.push_back(consistency_error(d, d.state(xt, guess), t, p));
      report.learned.push_back(all_ok ? consistency_error(d, d.state(xt, xb), t, p) : nan);
    }
    return report;
  }
  const DecouplingL2& d = *problem.level2;
  Level2Parts guess{Vector(), Vector::Zero(d.dim_xtp()), Vector::Zero(d.dim_xbp()), Vector::Zero(d.dim_xbq())};
  for (double t : times) {
    bool diff_ok = true;
    const Vector now = predict(d.xtq_names, t, diff_ok);
    const Vector next = predict(d.xtq_names, t + h, diff_ok);
    if (!diff_ok) throw Error("missing-model", "a differential coordinate has no model");
    bool all_ok = true;
    Level2Parts learned{now, predict(d.xtp_names, t, all_ok), Vector(), Vector()};
    if (all_ok) learned.xbp = predict(d.xbp_names, t, all_ok);
    if (all_ok) learned.xbq = predict(d.xbq_names, t, all_ok);
    Vector xtp_next;
    if (all_ok) xtp_next = predict(d.xtp_names, t + h, all_ok);

    guess.xtq = now;
    std::optional<Index2Recovery> r;
    if (all_ok) {
      try {
        r = recover_index2(d, now, next, t, h, p, problem.newton, &learned);
      } catch (const Error&) {
        r.reset();
      }
    }
    if (!r) r = recover_index2(d, now, next, t, h, p, problem.newton, &guess);
    guess = r->parts;
    report.reconstructed.push_back(consistency_error(d, r->parts, r->xtp_dot, t, p));
    report.learned.push_back(all_ok ? consistency_error(d, learned, (xtp_next - learned.xtp) / h, t, p) : nan);
  }
  return report;
}

std::vector<VariableModel> run_active_learning(const LearnProblem& problem, const GroundTruth& truth,
                                               const LearnConfig& cfg) {
  std::vector<VariableModel> result;
  for (const auto& v : cfg.variables) result.push_back(learn_variable(problem, truth, cfg, v));
  for (const auto& v : cfg.comparison) result.push_back(learn_variable(problem, truth, cfg, v));
  return result;
}

}  // namespace dissect
