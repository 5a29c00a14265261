#include "dissect/simulate.hpp"

#include "dissect/recover.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace dissect {

std::string to_string(Method m) { return m == Method::ImplicitEuler ? "implicit-euler" : "trapezoidal"; }

Vector Trajectory::at(double t) const {
  if (times.empty()) throw DimensionMismatch("empty trajectory");
  if (t <= times.front()) return states.row(0).transpose();
  if (t >= times.back()) return states.row(states.rows() - 1).transpose();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const Index k = static_cast<Index>(it - times.begin());
  const double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
  return ((1.0 - w) * states.row(k - 1) + w * states.row(k)).transpose();
}

Vector Trajectory::column(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return states.col(static_cast<Index>(i));
  }
  throw DimensionMismatch("trajectory has no column '" + name + "'");
}

std::vector<double> uniform_grid(double t0, double t_end, double step) {
  if (!(step > 0.0) || !(t_end >= t0)) throw Error("invalid-argument", "grid needs step > 0 and t_end >= t0");
  const auto count = static_cast<std::size_t>(std::floor((t_end - t0) / step + 1e-9));
  std::vector<double> g(count + 1);
  for (std::size_t k = 0; k <= count; ++k) g[k] = t0 + static_cast<double>(k) * step;
  return g;
}

namespace {

void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw Error("invalid-argument", "time grid is empty");
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] > grid[k - 1])) throw Error("invalid-argument", "time grid must be strictly increasing");
  }
}

Trajectory start(const std::vector<double>& grid, Index width, const Vector& p, std::vector<std::string> names,
                 std::string method) {
  Trajectory tr;
  tr.times = grid;
  tr.states = Matrix::Zero(static_cast<Index>(grid.size()), width);
  tr.parameters = p;
  tr.names = std::move(names);
  tr.method = std::move(method);
  tr.step = grid.size() > 1 ? grid[1] - grid[0] : 0.0;
  return tr;
}

[[noreturn]] void fail_step(Trajectory tr, std::size_t k, const Error& e) {
  const std::string message = "step " + std::to_string(k) + " (t = " + std::to_string(tr.times[k]) + " s): " + e.what();
  const int iterations = dynamic_cast<const NoConvergence*>(&e) ? static_cast<const NoConvergence&>(e).iterations() : 0;
  tr.times.resize(k);
  tr.states.conservativeResize(static_cast<Index>(k), tr.states.cols());
  throw StepFailure(message, iterations, std::move(tr));
}

void record(Trajectory& tr, const NewtonStats& s) {
  tr.newton_iterations += s.iterations;
  tr.max_newton_iterations = std::max(tr.max_newton_iterations, s.iterations);
}

bool kbar_q_regular(const DecouplingL1& d) {
  const Matrix k = d.k_bar_q(d.reference_state, d.reference_parameters);
  if (k.rows() == 0) return true;
  Eigen::FullPivLU<Matrix> lu(k);
  lu.setThreshold(1e-10);
  return lu.isInvertible();
}

}  // namespace

Vector consistent_initial(const DecouplingL1& d, const Vector& guess, double t0, const Vector& p,
                          const NewtonConfig& cfg) {
  const auto s = d.split(guess);
  const Vector xb = recover_index1(d, s.complement_part, t0, p, cfg, s.kernel_part);
  return d.state(s.complement_part, xb);
}

Vector consistent_initial(const DecouplingL2& d, const Vector& guess, double t0, const Vector& p,
                          const NewtonConfig& cfg) {
  Level2Parts parts = d.split(guess);
  parts.xtp = solve_xtp(d, parts, t0, p, cfg);
  const double h = 1e-7 * std::max(1e-3, std::abs(t0));
  const Vector ahead = solve_xtp(d, parts, t0 + h, p, cfg);
  const Vector behind = solve_xtp(d, parts, t0 - h, p, cfg);
  const Vector rate = (ahead - behind) / (2.0 * h);
  return d.state(solve_xb_joint(d, parts, rate, t0, p, cfg));
}

Vector consistent_initial(const DaeSystem& system, const Vector& guess, double t0, const Vector& p,
                          const NewtonConfig& cfg) {
  if (static_cast<std::size_t>(guess.size()) != system.size()) throw DimensionMismatch("guess has the wrong size");
  const DecouplingL1 l1 = decouple_level1(system);
  if (kbar_q_regular(l1)) return consistent_initial(l1, guess, t0, p, cfg);
  return consistent_initial(decouple_level2(l1), guess, t0, p, cfg);
}

namespace {

// One implicit step of the full DAE from (t_prev, prev) to t.
Vector dae_step(const DaeSystem& system, const Vector& prev, double t_prev, double t, const Vector& p,
                const NewtonConfig& cfg, Method method, NewtonStats& stats) {
  const double h = t - t_prev;
  if (method == Method::ImplicitEuler) {
    const Vector f = system.source(t, p);
    auto residual = [&](const Vector& y) {
      return Vector(system.mass(y, p) * ((y - prev) / h) + system.stiffness(y, p) * y + f);
    };
    auto jacobian = [&](const Vector& y) {
      return Matrix(system.mass(y, p) / h + system.mass_jacobian(y, (y - prev) / h, p) + system.tangent(y, p));
    };
    return newton_solve(residual, jacobian, prev, cfg, &stats);
  }
  const Matrix m_prev = system.mass(prev, p);
  const Vector old = system.stiffness(prev, p) * prev + system.source(t_prev, p);
  const Vector f = system.source(t, p);
  auto residual = [&](const Vector& y) {
    const Matrix m = 0.5 * (system.mass(y, p) + m_prev);
    return Vector(m * ((y - prev) / h) + 0.5 * (system.stiffness(y, p) * y + f) + 0.5 * old);
  };
  auto jacobian = [&](const Vector& y) {
    return Matrix(0.5 * (system.mass(y, p) + m_prev) / h + 0.5 * system.mass_jacobian(y, (y - prev) / h, p) +
                  0.5 * system.tangent(y, p));
  };
  return newton_solve(residual, jacobian, prev, cfg, &stats);
}

constexpr int kMaxSubdivisions = 6;

}  // namespace

Trajectory integrate_dae(const DaeSystem& system, const Vector& x0, const std::vector<double>& grid, const Vector& p,
                         const NewtonConfig& cfg, Method method) {
  check_grid(grid);
  if (static_cast<std::size_t>(x0.size()) != system.size()) throw DimensionMismatch("x0 has the wrong size");
  Trajectory tr = start(grid, x0.size(), p, system.layout.names, to_string(method));
  tr.states.row(0) = x0.transpose();
  Vector x = x0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const Vector prev = x;
    NewtonStats stats;
    try {
      x = dae_step(system, prev, grid[k - 1], grid[k], p, cfg, method, stats);
    } catch (const Error& first) {
      // Diode switching can defeat Newton from the previous state; retry the
      // interval with 2, 4, ... internal steps before giving up.
      bool solved = false;
      for (int level = 1; level <= kMaxSubdivisions && !solved; ++level) {
        const int parts = 1 << level;
        const double h = (grid[k] - grid[k - 1]) / parts;
        try {
          Vector y = prev;
          NewtonStats total;
          for (int s = 0; s < parts; ++s) {
            NewtonStats sub;
            const double t_prev = grid[k - 1] + s * h;
            const double t_next = s + 1 == parts ? grid[k] : t_prev + h;
            y = dae_step(system, y, t_prev, t_next, p, cfg, method, sub);
            total.iterations += sub.iterations;
            total.residual_norm = sub.residual_norm;
          }
          x = y;
          stats = total;
          solved = true;
          ++tr.subdivided_steps;
        } catch (const Error&) {
        }
      }
      if (!solved) fail_step(std::move(tr), k, first);
    }
    record(tr, stats);
    tr.states.row(static_cast<Index>(k)) = x.transpose();
  }
  return tr;
}

Trajectory integrate_reduced_ode(const DecouplingL1& d, const Vector& y0, const std::vector<double>& grid,
                                 const Vector& p, const NewtonConfig& cfg) {
  check_grid(grid);
  if (y0.size() != d.differential_size()) throw DimensionMismatch("y0 has the wrong size");
  Trajectory tr = start(grid, y0.size(), p, d.differential_names, "reduced-implicit-euler");
  tr.states.row(0) = y0.transpose();
  Vector xt = y0;
  Vector xb = recover_index1(d, xt, grid[0], p, cfg);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double h = grid[k] - grid[k - 1];
    const double t = grid[k];
    const Vector prev = xt;
    const Index nt = d.differential_size();
    NewtonStats stats;
    // xt and xb are solved together; a nested algebraic solve leaves
    // rounding noise in the outer residual that stalls the line search.
    auto residual = [&](const Vector& z) {
      const Vector y = z.head(nt), b = z.tail(z.size() - nt);
      Vector r(z.size());
      r << d.differential_residual((y - prev) / h, y, b, t, p), d.algebraic_residual(y, b, t, p);
      return r;
    };
    auto jacobian = [&](const Vector& z) {
      const Vector y = z.head(nt);
      const Vector x = d.state(y, z.tail(z.size() - nt));
      const Matrix tan = d.system.tangent(x, p);
      const Matrix act = d.system.mass_jacobian(x, d.P() * ((y - prev) / h), p);
      Matrix j(z.size(), z.size());
      j << d.V().transpose() * (d.system.mass(x, p) * d.P() / h + (act + tan) * d.P()),
          d.V().transpose() * (act + tan) * d.Q(), d.W().transpose() * tan * d.P(), d.W().transpose() * tan * d.Q();
      return j;
    };
    try {
      Vector z0(nt + xb.size());
      z0 << prev, xb;
      const Vector z = newton_solve(residual, jacobian, z0, cfg, &stats);
      xt = z.head(nt);
      xb = z.tail(z.size() - nt);
    } catch (const Error& e) {
      fail_step(std::move(tr), k, e);
    }
    record(tr, stats);
    tr.states.row(static_cast<Index>(k)) = xt.transpose();
  }
  return tr;
}

Trajectory integrate_reduced_ode(const DecouplingL2& d, const Vector& y0, const std::vector<double>& grid,
                                 const Vector& p, const NewtonConfig& cfg) {
  check_grid(grid);
  if (y0.size() != d.dim_xtq()) throw DimensionMismatch("y0 has the wrong size");
  Trajectory tr = start(grid, y0.size(), p, d.xtq_names, "reduced-implicit-euler");
  tr.states.row(0) = y0.transpose();
  Level2Parts parts{y0, Vector::Zero(d.dim_xtp()), Vector::Zero(d.dim_xbp()), Vector::Zero(d.dim_xbq())};
  parts = d.split(consistent_initial(d, d.state(parts), grid[0], p, cfg));
  parts.xtq = y0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double h = grid[k] - grid[k - 1];
    const double t = grid[k];
    const Level2Parts prev = parts;
    NewtonStats stats;
    // All blocks are solved together: with xtq as the only outer unknown
    // the algebraic closure can be steep enough (diodes near cut-off) to
    // stall Newton. xtp' is the backward difference over the step.
    const Index nq = d.dim_xtq(), np = d.dim_xtp(), nbp = d.dim_xbp();
    auto unpack = [&](const Vector& z) {
      return Level2Parts{z.segment(0, nq), z.segment(nq, np), z.segment(nq + np, nbp),
                         z.tail(z.size() - nq - np - nbp)};
    };
    auto residual = [&](const Vector& z) {
      const Level2Parts q = unpack(z);
      const Vector xtp_dot = (q.xtp - prev.xtp) / h;
      Vector r(z.size());
      r << d.ode_residual(q, (q.xtq - prev.xtq) / h, xtp_dot, t, p), d.eq_xtp(q, t, p), d.eq_xbp(q, t, p),
          d.eq_xbq(q, xtp_dot, t, p);
      return r;
    };
    try {
      Level2Parts guess = prev;
      guess.xtp = solve_xtp(d, prev, t, p, cfg);
      Vector z0(nq + np + nbp + d.dim_xbq());
      z0 << guess.xtq, guess.xtp, guess.xbp, guess.xbq;
      parts = unpack(newton_solve(residual, {}, z0, cfg, &stats));
    } catch (const Error& e) {
      fail_step(std::move(tr), k, e);
    }
    record(tr, stats);
    tr.states.row(static_cast<Index>(k)) = parts.xtq.transpose();
  }
  return tr;
}

}  // namespace dissect
