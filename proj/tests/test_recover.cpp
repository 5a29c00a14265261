#include "dissect/decouple.hpp"
#include "dissect/errors.hpp"
#include "dissect/fixtures.hpp"
#include "dissect/recover.hpp"
#include "dissect/simulate.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace dissect;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

constexpr double kPi = std::numbers::pi;

double source_v(double t) { return std::sin(2.0 * kPi * 300.0 * t); }
double source_i(double t) { return 1e-4 * std::sin(2.0 * kPi * 200.0 * t); }
double source_i_rate(double t) { return 1e-4 * 2.0 * kPi * 200.0 * std::cos(2.0 * kPi * 200.0 * t); }

}  // namespace

TEST_CASE("index-1 recovery matches the closed-form node equations", "[recover]") {
  // phi1 = v_s, phi2 = v_s - R i_L, i_V = -i_L.
  const CircuitGraph g = load_fixture("oscillator-v");
  const DecouplingL1 d = decouple_level1(build_dae(g));
  const Vector p{{2e-3, 150e-9}};
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const double t = 1e-3 * (u(rng) + 1.0);
    const double phi3 = 0.7 * u(rng), i_l = 2e-3 * u(rng);
    const Vector xt = d.differential_map * (Vector(5) << 0.0, 0.0, phi3, i_l, 0.0).finished();
    const Vector x = recombine(d, xt, recover_index1(d, xt, t, p));
    CHECK_THAT(x(2), WithinAbs(phi3, 1e-15));
    CHECK_THAT(x(3), WithinAbs(i_l, 1e-15));
    CHECK_THAT(x(0), WithinAbs(source_v(t), 1e-12));
    CHECK_THAT(x(1), WithinAbs(source_v(t) - 500.0 * i_l, 1e-12));
    CHECK_THAT(x(4), WithinAbs(-i_l, 1e-15));
    CHECK(consistency_error(d, x, t, p) <= 1e-12);
  }
}

TEST_CASE("index-2 recovery matches the closed-form branch equations", "[recover]") {
  // i_L = i_s, phi2 = phi3 + L i_s', phi1 = phi2 + R i_s.
  const CircuitGraph g = load_fixture("oscillator-i");
  const DecouplingL2 d = decouple_level2(decouple_level1(build_dae(g)));
  std::mt19937_64 rng(67);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const double l = 1e-3 + 2e-3 * u(rng);
    const Vector p{{l, 200e-9}};
    const double t = 1e-2 * u(rng);
    const double phi3 = 0.6 * (2.0 * u(rng) - 1.0);
    const Vector xtq = d.xtq_map * (Vector(4) << 0.0, 0.0, phi3, 0.0).finished();
    const double dt = 1e-8;
    const Index2Recovery r = recover_index2(d, xtq, xtq, t, dt, p);
    const Vector x = recombine(d, r.parts);
    const double i_s = source_i(t), rate = source_i_rate(t);
    CHECK_THAT(x(2), WithinAbs(phi3, 1e-14));
    CHECK_THAT(x(3), WithinRel(i_s, 1e-10));
    // Difference quotient: error of order dt * i_s'', measured against the
    // amplitude of the L i_s' term.
    const double phi2 = phi3 + l * rate;
    const double amplitude = l * 1e-4 * 2.0 * kPi * 200.0;
    CHECK_THAT(x(1), WithinAbs(phi2, 1e-4 * amplitude));
    CHECK_THAT(x(0), WithinAbs(x(1) + 500.0 * i_s, 1e-12));

    // With the analytic rate the recovery is exact to solver precision.
    Level2Parts ctx = r.parts;
    Vector xtp_dot = d.xtp_map * (Vector(4) << 0.0, 0.0, 0.0, rate).finished();
    const Vector exact = recombine(d, solve_xb_joint(d, ctx, xtp_dot, t, p));
    CHECK_THAT(exact(1), WithinAbs(phi2, 1e-10 * amplitude));
    CHECK(consistency_error(d, d.split(exact), xtp_dot, t, p) <= 1e-12);
  }
}

TEST_CASE("consistency error detects an inconsistent state", "[recover]") {
  const CircuitGraph g = load_fixture("oscillator-v");
  const DecouplingL1 d = decouple_level1(build_dae(g));
  const Vector p = g.nominal_parameters();
  const Vector xt{{0.3, 1e-3}};
  Vector x = recombine(d, xt, recover_index1(d, xt, 1e-3, p));
  CHECK(consistency_error(d, x, 1e-3, p) <= 1e-12);
  x(1) += 1e-3;
  CHECK(consistency_error(d, x, 1e-3, p) > 1e-7);
}

TEST_CASE("reconstruction from simulated differential states reproduces the simulation", "[recover]") {
  const CircuitGraph g = load_fixture("oscillator-v");
  const DaeSystem sys = build_dae(g);
  const DecouplingL1 d = decouple_level1(sys);
  const Vector p{{1.7e-3, 220e-9}};
  const Vector x0 = consistent_initial(sys, Vector::Zero(5), 0.0, p);
  const Trajectory tr = integrate_dae(sys, x0, uniform_grid(0.0, 2e-3, 1e-6), p);
  for (Index k = 0; k < tr.states.rows(); k += 97) {
    const Vector x = tr.states.row(k).transpose();
    const Vector xt = d.split(x).complement_part;
    const Vector back = recombine(d, xt, recover_index1(d, xt, tr.times[static_cast<std::size_t>(k)], p));
    CHECK((back - x).norm() <= 1e-9 * (x.norm() + 1e-12));
  }
}

TEST_CASE("algebraic-only parameters", "[recover]") {
  const CircuitGraph osc_i = load_fixture("oscillator-i");
  const DecouplingL2 d2 = decouple_level2(decouple_level1(build_dae(osc_i)));
  CHECK(ae_only_parameters(d2, osc_i.parameter_space, default_probes(d2.dim_xtq(), 1e-2, 20)) ==
        std::vector<std::string>{"L"});

  const CircuitGraph osc_v = load_fixture("oscillator-v");
  const DecouplingL1 d1 = decouple_level1(build_dae(osc_v));
  CHECK(ae_only_parameters(d1, osc_v.parameter_space, default_probes(d1.differential_size(), 1e-2, 20)).empty());
}

TEST_CASE("default probes are deterministic and inside the horizon", "[recover]") {
  const auto a = default_probes(3, 0.05, 10);
  const auto b = default_probes(3, 0.05, 10);
  REQUIRE(a.size() == 10);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].t == b[k].t);
    CHECK(a[k].differential == b[k].differential);
    CHECK(a[k].t >= 0.0);
    CHECK(a[k].t <= 0.05);
    CHECK(a[k].differential.size() == 3);
  }
}
