#include "dissect/basis.hpp"
#include "dissect/decouple.hpp"
#include "dissect/errors.hpp"
#include "dissect/fixtures.hpp"
#include "dissect/mna.hpp"
#include "dissect/topology.hpp"

#include <catch_amalgamated.hpp>

#include <Eigen/SVD>

#include <algorithm>
#include <random>
#include <set>

using namespace dissect;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Vector random_vector(Index n, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

Vector random_parameters(const CircuitGraph& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector p(static_cast<Index>(g.parameter_space.size()));
  for (std::size_t i = 0; i < g.parameter_space.size(); ++i) {
    const auto& r = g.parameter_space[i];
    p(static_cast<Index>(i)) = r.lower + u(rng) * (r.upper - r.lower);
  }
  return p;
}

// Indices of the unit-vector columns of a selection matrix.
std::set<Index> selected(const Matrix& m) {
  std::set<Index> out;
  for (Index j = 0; j < m.cols(); ++j) {
    Index row = -1;
    for (Index i = 0; i < m.rows(); ++i) {
      if (m(i, j) != 0.0) {
        if (row >= 0 || std::abs(m(i, j)) != 1.0) return {};
        row = i;
      }
    }
    out.insert(row);
  }
  return out;
}

double sigma_min(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(a).singularValues().minCoeff();
}

DaeSystem linear_system(const Matrix& m, const Matrix& k) {
  DaeSystem s;
  s.layout = StateLayout::generic(static_cast<std::size_t>(m.rows()));
  s.mass = [m](const Vector&, const Vector&) { return m; };
  s.stiffness = [k](const Vector&, const Vector&) { return k; };
  s.source = [n = m.rows()](double, const Vector&) { return Vector(Vector::Zero(n)); };
  return s;
}

}  // namespace

TEST_CASE("nullspace bases of reference matrices", "[decouple][basis]") {
  const Vector d{{0.0, 0.0, 2e-7, 1e-3, 0.0}};
  const Basis b = preferred_basis(Matrix(d.asDiagonal()));
  CHECK(selected(b.kernel) == std::set<Index>{0, 1, 4});
  CHECK(selected(b.complement) == std::set<Index>{2, 3});

  const Basis id = nullspace_basis(Matrix::Identity(3, 3));
  CHECK(id.kernel.cols() == 0);
  CHECK(id.complement.cols() == 3);
  CHECK(sigma_min(id.complement) > 1.0 - 1e-12);

  const Basis zero = nullspace_basis(Matrix::Zero(3, 3));
  CHECK(zero.kernel.cols() == 3);
  CHECK(zero.complement.cols() == 0);
}

TEST_CASE("nullspace basis invariants on random low-rank matrices", "[decouple][basis][property]") {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> dim(2, 7);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = dim(rng);
    const Index rank = std::uniform_int_distribution<Index>(0, n)(rng);
    Matrix a = Matrix::Zero(n, n);
    for (Index r = 0; r < rank; ++r) a += random_vector(n, rng, 1.0) * random_vector(n, rng, 1.0).transpose();
    for (const Basis& b : {nullspace_basis(a), preferred_basis(a)}) {
      CHECK(b.kernel.cols() == n - rank);
      CHECK(b.kernel.cols() + b.complement.cols() == n);
      CHECK((a * b.kernel).norm() <= 1e-12 * std::max(a.norm(), 1.0));
      Matrix pq(n, n);
      pq << b.complement, b.kernel;
      CHECK(sigma_min(pq) > 1e-8);
    }
    const Basis b = nullspace_basis(a);
    CHECK((b.kernel.transpose() * b.kernel - Matrix::Identity(b.kernel.cols(), b.kernel.cols())).norm() <= 1e-12);
  }
}

TEST_CASE("topological bases reproduce the printed selections", "[decouple][topology]") {
  const TopologicalBases v = topological_bases(build_incidence(load_fixture("oscillator-v")));
  CHECK_FALSE(v.fallback);
  CHECK(selected(v.first.kernel) == std::set<Index>{0, 1, 4});
  CHECK(selected(v.first.complement) == std::set<Index>{2, 3});

  // Second level of the current-driven oscillator, in (phi1, phi2) coordinates.
  const DecouplingL2 d = decouple_level2(decouple_level1(build_dae(load_fixture("oscillator-i"))));
  CHECK(d.bar.kernel.isApprox(Matrix{{1.0}, {1.0}}));
  CHECK(d.bar.complement.isApprox(Matrix{{1.0}, {0.0}}));
  CHECK(d.tilde.kernel.isApprox(Matrix{{1.0}, {0.0}}));
  CHECK(d.tilde.complement.isApprox(Matrix{{0.0}, {1.0}}));

  const TopologicalBases none = topological_bases(build_incidence(parse_netlist("R1 1 2 1\nR2 2 0 1\nR3 1 0 1\n")));
  CHECK(none.q_c.isApprox(Matrix::Identity(2, 2)));
}

TEST_CASE("index detection on the fixtures", "[decouple][index]") {
  const IndexReport v = detect_index(load_fixture("oscillator-v"));
  CHECK(v.topological_index == 1);
  CHECK(v.numeric_index == 1);
  CHECK(v.li_cutsets.empty());
  CHECK(v.cv_loops.empty());

  const IndexReport i = detect_index(load_fixture("oscillator-i"));
  CHECK(i.topological_index == 2);
  CHECK(i.numeric_index == 2);
  REQUIRE(i.li_cutsets.size() == 1);
  auto cut = i.li_cutsets[0];
  std::sort(cut.begin(), cut.end());
  CHECK(cut == std::vector<std::string>{"I1", "L1"});

  const IndexReport r = detect_index(load_fixture("rectifier"));
  CHECK(r.topological_index == 2);
  CHECK(r.numeric_index == 2);
}

TEST_CASE("a loop of a voltage source and a capacitor is index 2", "[decouple][index]") {
  const IndexReport r = detect_index(parse_netlist("V1 1 0 SIN(0 1 50)\nC1 1 0 1e-6\nR1 1 0 10\n"));
  CHECK(r.topological_index == 2);
  REQUIRE(r.cv_loops.size() == 1);
  CHECK(r.numeric_index == 2);
}

TEST_CASE("level-1 decoupling of the voltage-driven oscillator", "[decouple]") {
  const DaeSystem sys = build_dae(load_fixture("oscillator-v"));
  const DecouplingL1 d = decouple_level1(sys);
  CHECK(d.differential_names == std::vector<std::string>{"phi3", "i_L1"});
  CHECK(d.algebraic_names == std::vector<std::string>{"phi1", "phi2", "i_V1"});
  CHECK(d.W().isApprox(d.Q()));
  CHECK(d.V().isApprox(d.P()));
  const Vector p{{2e-3, 150e-9}};
  const Matrix mt = d.mass_tilde(Vector::Zero(5), p);
  CHECK(mt.isApprox(Matrix(Vector{{150e-9, 2e-3}}.asDiagonal())));
  CHECK_THROWS_AS(decouple_level2(d), WrongIndex);
}

TEST_CASE("level-1 decoupling of the current-driven oscillator", "[decouple]") {
  const DecouplingL1 d = decouple_level1(build_dae(load_fixture("oscillator-i")));
  CHECK(d.differential_names == std::vector<std::string>{"phi3", "i_L1"});
  CHECK(d.algebraic_names == std::vector<std::string>{"phi1", "phi2"});
}

TEST_CASE("an ODE has no algebraic part", "[decouple]") {
  const DecouplingL1 d = decouple_level1(linear_system(Matrix::Identity(3, 3), Matrix::Identity(3, 3)));
  CHECK(d.algebraic_size() == 0);
  CHECK(d.differential_size() == 3);
}

TEST_CASE("rectifier level-2 dimensions", "[decouple]") {
  const DecouplingL2 d = decouple_level2(decouple_level1(build_dae(load_fixture("rectifier"))));
  CHECK(d.dim_xtq() == 2);
  CHECK(d.dim_xtp() == 1);
  CHECK(d.dim_xbp() == 2);
  CHECK(d.dim_xbq() == 1);
  CHECK(d.xtq_names == std::vector<std::string>{"v_3_4", "i_K1b"});
}

TEST_CASE("verification reports", "[decouple][verify]") {
  const DaeSystem v = build_dae(load_fixture("oscillator-v"));
  const VerificationReport rv = verify_decoupling(decouple_level1(v), default_samples(v, 100));
  CHECK(rv.pass);
  CHECK(rv.min_mass_tilde > 0.0);

  DecoupleOptions generic;
  generic.topological = false;
  const DaeSystem zero = linear_system(Matrix::Zero(2, 2), Matrix::Zero(2, 2));
  const VerificationReport rz = verify_decoupling(decouple_level1(zero, generic), default_samples(zero, 5));
  CHECK_FALSE(rz.pass);
  CHECK(std::any_of(rz.diagnostics.begin(), rz.diagnostics.end(),
                    [](const std::string& s) { return s.rfind("underdetermined", 0) == 0; }));

  const DaeSystem i = build_dae(load_fixture("oscillator-i"));
  const VerificationReport ri = verify_decoupling(decouple_level2(decouple_level1(i)), default_samples(i, 20));
  CHECK(ri.pass);
  CHECK_THAT(ri.min_wkp, WithinRel(1.0, 1e-12));
}

TEST_CASE("splitting round trips", "[decouple][property]") {
  std::mt19937_64 rng(43);
  for (const auto& name : fixture_names()) {
    const DaeSystem sys = build_dae(load_fixture(name));
    const DecouplingL1 l1 = decouple_level1(sys);
    std::optional<DecouplingL2> l2;
    if (name != "oscillator-v") l2 = decouple_level2(l1);
    for (int k = 0; k < 200; ++k) {
      const Vector x = random_vector(static_cast<Index>(sys.size()), rng, 10.0);
      const SplitCoordinates c = l1.split(x);
      CHECK((l1.state(c.complement_part, c.kernel_part) - x).norm() <= 1e-13 * x.norm());
      if (l2) CHECK((l2->state(l2->split(x)) - x).norm() <= 1e-13 * x.norm());
    }
  }
}

TEST_CASE("decoupled residuals are projections of the original residual", "[decouple][property]") {
  std::mt19937_64 rng(47);
  for (const auto& name : fixture_names()) {
    const CircuitGraph g = load_fixture(name);
    const DaeSystem sys = build_dae(g);
    const DecouplingL1 l1 = decouple_level1(sys);
    const Index n = static_cast<Index>(sys.size());
    for (int k = 0; k < 100; ++k) {
      const Vector x = random_vector(n, rng, 0.5);
      const Vector p = random_parameters(g, rng);
      const double t = 1e-4 * k;
      const SplitCoordinates c = l1.split(x);
      const Vector xt_dot = random_vector(l1.differential_size(), rng, 100.0);
      const Vector xdot = l1.P() * xt_dot;
      const Vector r = sys.residual(xdot, x, t, p);
      Vector stacked(n);
      stacked << l1.differential_residual(xt_dot, c.complement_part, c.kernel_part, t, p),
          l1.algebraic_residual(c.complement_part, c.kernel_part, t, p);
      Matrix proj(n, n);
      proj << l1.V().transpose(), l1.W().transpose();
      const Vector expected = proj * r;
      CHECK((stacked - expected).norm() <= 1e-12 * (expected.norm() + 1e-12));

      if (name == "oscillator-v") continue;
      const DecouplingL2 l2 = decouple_level2(l1);
      const Level2Parts parts = l2.split(x);
      const Vector xtq_dot = random_vector(l2.dim_xtq(), rng, 100.0);
      const Vector xtp_dot = random_vector(l2.dim_xtp(), rng, 100.0);
      const Vector kxf = sys.stiffness(x, p) * x + sys.source(t, p);
      const Vector alg = l1.W().transpose() * kxf;
      CHECK((l2.eq_xtp(parts, t, p) - l2.bar_left.kernel.transpose() * alg).norm() <= 1e-12 * (alg.norm() + 1e-12));
      CHECK((l2.eq_xbp(parts, t, p) - l2.bar_left.complement.transpose() * alg).norm() <=
            1e-12 * (alg.norm() + 1e-12));
      const Vector rate = l2.tilde.complement * xtp_dot + l2.tilde.kernel * xtq_dot;
      const Vector diff = l1.V().transpose() * (sys.mass(x, p) * (l1.P() * rate) + kxf);
      const Vector ode = l2.tilde_left.complement.transpose() * diff;
      CHECK((l2.ode_residual(parts, xtq_dot, xtp_dot, t, p) - ode).norm() <= 1e-12 * (ode.norm() + 1e-12));
      const Vector diff_p = l1.V().transpose() * (sys.mass(x, p) * (l1.P() * (l2.tilde.complement * xtp_dot)) + kxf);
      const Vector xbq = l2.w_tilde(x, p).transpose() * diff_p;
      CHECK((l2.eq_xbq(parts, xtp_dot, t, p) - xbq).norm() <= 1e-12 * (xbq.norm() + 1e-12));
    }
  }
}

TEST_CASE("topological and numeric index agree", "[decouple][index][property]") {
  for (const auto& name : fixture_names()) {
    const CircuitGraph g = load_fixture(name);
    CHECK(detect_index_topological(g).topological_index == detect_index_numeric(build_dae(g)));
  }
}

TEST_CASE("current-driven oscillator: reduced ODE ignores R and L", "[decouple][property]") {
  std::string text = fixture_text("oscillator-i");
  text.replace(text.find("R1 1 2 500"), 10, "R1 1 2 param=R");
  text = "PARAM R 100 1000\n" + text;
  const CircuitGraph g = parse_netlist(text);
  const DecouplingL2 d = decouple_level2(decouple_level1(build_dae(g)));
  const Index l = static_cast<Index>(*g.parameter_index("L"));
  const Index r = static_cast<Index>(*g.parameter_index("R"));
  std::mt19937_64 rng(53);
  for (int k = 0; k < 100; ++k) {
    const Vector x = random_vector(4, rng, 0.5);
    const Level2Parts parts = d.split(x);
    const Vector xtq_dot = random_vector(d.dim_xtq(), rng, 10.0);
    const Vector xtp_dot = random_vector(d.dim_xtp(), rng, 10.0);
    const double t = 1e-4 * k;
    Vector p = random_parameters(g, rng);
    const Vector base = d.ode_residual(parts, xtq_dot, xtp_dot, t, p);
    p(l) = g.parameter_space[static_cast<std::size_t>(l)].upper;
    p(r) = g.parameter_space[static_cast<std::size_t>(r)].lower;
    const Vector moved = d.ode_residual(parts, xtq_dot, xtp_dot, t, p);
    CHECK((moved - base).norm() <= 1e-14 * (base.norm() + 1e-300));
  }
}
