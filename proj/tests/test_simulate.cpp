#include "dissect/decouple.hpp"
#include "dissect/errors.hpp"
#include "dissect/fixtures.hpp"
#include "dissect/newton.hpp"
#include "dissect/simulate.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace dissect;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const char* kRc = "V1 1 0 DC 1\nR1 1 2 1000\nC1 2 0 1e-6\n";

// Error of the capacitor voltage at t = 2 ms against 1 - exp(-t / RC).
double rc_error(double step, Method method) {
  const DaeSystem sys = build_dae(parse_netlist(kRc));
  const Vector p;
  const Vector x0 = consistent_initial(sys, Vector::Zero(3), 0.0, p);
  const Trajectory tr = integrate_dae(sys, x0, uniform_grid(0.0, 2e-3, step), p, {}, method);
  const double exact = 1.0 - std::exp(-tr.times.back() / 1e-3);
  return std::abs(tr.states(tr.states.rows() - 1, 1) - exact);
}

}  // namespace

TEST_CASE("uniform grid endpoints", "[simulate]") {
  const auto g = uniform_grid(0.0, 1e-2, 1e-6);
  CHECK(g.size() == 10001);
  CHECK(g.front() == 0.0);
  CHECK_THAT(g.back(), WithinRel(1e-2, 1e-12));
  CHECK(uniform_grid(0.0, 1.0, 0.3).size() == 4);
  for (std::size_t k = 1; k < g.size(); ++k) CHECK(g[k] > g[k - 1]);
}

TEST_CASE("Newton solves scalar and vector problems", "[simulate][newton]") {
  NewtonStats stats;
  const Vector root = newton_solve([](const Vector& y) { return Vector{{y(0) * y(0) - 2.0}}; },
                                   [](const Vector& y) { return Matrix{{2.0 * y(0)}}; }, Vector{{1.0}}, {}, &stats);
  CHECK_THAT(root(0), WithinRel(std::sqrt(2.0), 1e-10));  // stops at abs_tol + rel_tol |r(guess)|
  CHECK(stats.iterations > 0);

  // Finite-difference Jacobian gives the same answer.
  NewtonConfig fd;
  fd.analytic_jacobian = false;
  const Vector again = newton_solve([](const Vector& y) { return Vector{{y(0) * y(0) - 2.0}}; },
                                    [](const Vector& y) { return Matrix{{2.0 * y(0)}}; }, Vector{{1.0}}, fd);
  CHECK_THAT(again(0), WithinRel(std::sqrt(2.0), 1e-10));

  const auto linear = [](const Vector& y) { return Vector{{y(0) + 2.0 * y(1) - 3.0, 4.0 * y(0) - y(1) - 3.0}}; };
  const Vector sol = newton_solve(linear, nullptr, Vector::Zero(2));
  CHECK_THAT(sol(0), WithinAbs(1.0, 1e-10));
  CHECK_THAT(sol(1), WithinAbs(1.0, 1e-10));

  CHECK_THROWS_AS(newton_solve([](const Vector& y) { return Vector{{y(0) * y(0) + 1.0}}; },
                               [](const Vector& y) { return Matrix{{2.0 * y(0)}}; }, Vector{{1.0}}),
                  NoConvergence);
}

TEST_CASE("finite-difference Jacobian of a smooth map", "[simulate][newton]") {
  const auto f = [](const Vector& y) { return Vector{{std::sin(y(0)) * y(1), y(0) * y(0) + std::exp(y(1))}}; };
  const Vector y{{0.3, -0.7}};
  const Matrix j = finite_difference_jacobian(f, y);
  const Matrix exact{{std::cos(0.3) * -0.7, std::sin(0.3)}, {0.6, std::exp(-0.7)}};
  CHECK((j - exact).norm() <= 1e-7);
}

TEST_CASE("RC step response converges at the method order", "[simulate][property]") {
  for (const auto& [method, order] : {std::pair{Method::ImplicitEuler, 1.0}, std::pair{Method::Trapezoidal, 2.0}}) {
    const double e1 = rc_error(1e-4, method);
    const double e2 = rc_error(5e-5, method);
    const double e3 = rc_error(2.5e-5, method);
    CHECK_THAT(std::log2(e1 / e2), WithinAbs(order, 0.2));
    CHECK_THAT(std::log2(e2 / e3), WithinAbs(order, 0.2));
  }
}

TEST_CASE("consistent initial values satisfy the algebraic equations", "[simulate]") {
  for (const auto& name : fixture_names()) {
    const CircuitGraph g = load_fixture(name);
    const DaeSystem sys = build_dae(g);
    const Vector p = g.nominal_parameters();
    const Vector x0 = consistent_initial(sys, Vector::Zero(static_cast<Index>(sys.size())), 0.0, p);
    const DecouplingL1 l1 = decouple_level1(sys);
    const SplitCoordinates c = l1.split(x0);
    CHECK(l1.algebraic_residual(c.complement_part, c.kernel_part, 0.0, p).norm() <= 1e-9);
  }
}

TEST_CASE("reduced ODE and full DAE agree on the voltage-driven oscillator", "[simulate]") {
  const CircuitGraph g = load_fixture("oscillator-v");
  const DaeSystem sys = build_dae(g);
  const DecouplingL1 l1 = decouple_level1(sys);
  const Vector p{{1.7e-3, 220e-9}};
  const auto grid = uniform_grid(0.0, 2e-3, 1e-6);
  const Vector x0 = consistent_initial(sys, Vector::Zero(5), 0.0, p);
  const Trajectory full = integrate_dae(sys, x0, grid, p);
  const Trajectory reduced = integrate_reduced_ode(l1, l1.split(x0).complement_part, grid, p);
  REQUIRE(full.size() == reduced.size());
  const Matrix from_full = full.states * l1.differential_map.transpose();
  CHECK((from_full - reduced.states).norm() <= 1e-8 * from_full.norm());
}

TEST_CASE("reduced index-2 ODE agrees with the full DAE", "[simulate]") {
  const CircuitGraph g = load_fixture("oscillator-i");
  const DaeSystem sys = build_dae(g);
  const DecouplingL2 l2 = decouple_level2(decouple_level1(sys));
  const Vector p = g.nominal_parameters();
  const auto grid = uniform_grid(0.0, 2e-3, 1e-6);
  const Vector x0 = consistent_initial(sys, Vector::Zero(4), 0.0, p);
  const Trajectory full = integrate_dae(sys, x0, grid, p);
  const Trajectory reduced = integrate_reduced_ode(l2, l2.split(x0).xtq, grid, p);
  const Matrix from_full = full.states * l2.xtq_map.transpose();
  CHECK((from_full - reduced.states).norm() <= 1e-8 * from_full.norm());
}

TEST_CASE("oscillator-i capacitor voltage does not depend on L", "[simulate]") {
  const CircuitGraph g = load_fixture("oscillator-i");
  const DaeSystem sys = build_dae(g);
  const auto grid = uniform_grid(0.0, 5e-3, 1e-6);
  Matrix phi3[2];
  int k = 0;
  for (double l : {1e-3, 3e-3}) {
    const Vector p{{l, 200e-9}};
    const Vector x0 = consistent_initial(sys, Vector::Zero(4), 0.0, p);
    phi3[k++] = integrate_dae(sys, x0, grid, p).column("phi3");
  }
  CHECK((phi3[0] - phi3[1]).norm() <= 1e-10 * phi3[0].norm());
}

TEST_CASE("integration is deterministic", "[simulate][property]") {
  const CircuitGraph g = load_fixture("rectifier");
  const DaeSystem sys = build_dae(g);
  const Vector p = g.nominal_parameters();
  const auto grid = uniform_grid(0.0, 2e-3, 5e-6);
  const Vector x0 = consistent_initial(sys, Vector::Zero(static_cast<Index>(sys.size())), 0.0, p);
  const Trajectory a = integrate_dae(sys, x0, grid, p);
  const Trajectory b = integrate_dae(sys, x0, grid, p);
  CHECK(a.states == b.states);
  CHECK(a.newton_iterations == b.newton_iterations);
}

TEST_CASE("trajectory lookup", "[simulate]") {
  Trajectory tr;
  tr.times = {0.0, 1.0, 2.0};
  tr.states = Matrix{{0.0, 10.0}, {1.0, 20.0}, {4.0, 30.0}};
  tr.names = {"a", "b"};
  CHECK(tr.at(0.5).isApprox(Vector{{0.5, 15.0}}));
  CHECK(tr.at(-1.0) == Vector{{0.0, 10.0}});
  CHECK(tr.at(5.0) == Vector{{4.0, 30.0}});
  CHECK(tr.column("b") == Vector{{10.0, 20.0, 30.0}});
  CHECK_THROWS(tr.column("c"));
}

TEST_CASE("a failing step reports the accepted prefix", "[simulate]") {
  const CircuitGraph g = load_fixture("oscillator-v");
  const DaeSystem sys = build_dae(g);
  const Vector p = g.nominal_parameters();
  NewtonConfig cfg;
  cfg.max_iter = 1;
  cfg.abs_tol = 1e-300;
  cfg.rel_tol = 1e-300;
  try {
    integrate_dae(sys, Vector::Zero(5), uniform_grid(0.0, 1e-3, 1e-5), p, cfg);
    FAIL("expected a step failure");
  } catch (const StepFailure& e) {
    CHECK(e.partial().size() >= 1);
    CHECK(e.partial().states.row(0).norm() == 0.0);
  }
}
