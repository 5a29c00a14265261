#include "dissect/errors.hpp"
#include "dissect/fixtures.hpp"
#include "dissect/mna.hpp"
#include "dissect/netlist.hpp"
#include "dissect/waveform.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace dissect;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::string error_kind(const std::string& text) {
  try {
    parse_netlist(text);
  } catch (const Error& e) {
    return e.kind();
  }
  return "none";
}

}  // namespace

TEST_CASE("waveform values and derivatives", "[netlist][waveform]") {
  const double pi = std::numbers::pi;
  const Waveform s = Waveform::sine(0.0, 1.0, 300.0);
  CHECK_THAT(s.value(1.0 / 1200.0), WithinAbs(1.0, 1e-15));
  CHECK_THAT(s.derivative(0.0), WithinRel(600.0 * pi, 1e-15));

  const Waveform c = Waveform::cosine(0.5, 2.0, 50.0, 0.3);
  CHECK_THAT(c.value(0.0), WithinRel(0.5 + 2.0 * std::cos(0.3), 1e-15));
  CHECK(Waveform::constant(3.0).value(17.0) == 3.0);
  CHECK(Waveform::constant(3.0).derivative(17.0) == 0.0);

  // Analytic derivative against central differences at random times.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> when(0.0, 0.05);
  for (const Waveform& w : {s, c, Waveform::sine(1.0, 1e-4, 200.0, 1.1)}) {
    for (int k = 0; k < 50; ++k) {
      const double t = when(rng);
      const double h = 1e-7;
      const double fd = (w.value(t + h) - w.value(t - h)) / (2.0 * h);
      CHECK_THAT(w.derivative(t), WithinAbs(fd, 1e-6 * (1.0 + std::abs(fd))));
    }
  }
}

TEST_CASE("voltage-driven oscillator parses to three nodes and five branches", "[netlist]") {
  const CircuitGraph g = load_fixture("oscillator-v");
  CHECK(g.unknown_potentials() == 3);
  CHECK(g.branches.size() == 5);
  for (auto kind : {DeviceKind::VoltageSource, DeviceKind::Resistor, DeviceKind::Inductor, DeviceKind::Capacitor,
                    DeviceKind::Diode}) {
    CHECK(g.count(kind) == 1);
  }
  REQUIRE(g.parameter_space.size() == 2);
  CHECK(g.parameter_space[0].name == "L");
  CHECK(g.parameter_space[1].name == "C");
}

TEST_CASE("fixture branch counts per class", "[netlist]") {
  const CircuitGraph osc_i = load_fixture("oscillator-i");
  CHECK(osc_i.count(DeviceKind::CurrentSource) == 1);
  CHECK(osc_i.count(DeviceKind::VoltageSource) == 0);
  CHECK(osc_i.count(DeviceKind::Diode) == 1);

  const CircuitGraph rect = load_fixture("rectifier");
  CHECK(rect.count(DeviceKind::CurrentSource) == 1);
  CHECK(rect.count(DeviceKind::Resistor) == 1);
  CHECK(rect.count(DeviceKind::Capacitor) == 1);
  CHECK(rect.count(DeviceKind::Diode) == 4);
  CHECK(rect.count(DeviceKind::InductiveMultiport) == 1);
}

TEST_CASE("netlist errors", "[netlist]") {
  CHECK(error_kind("") == "missing-ground");
  CHECK(error_kind("R1 1 2 100\nR2 2 0 100\nR3 1 n9 100\n") == "dangling-node");
  CHECK(error_kind("R1 1 0 0\n") == "nonpositive-value");
  CHECK(error_kind("C1 1 0 -1e-9\nR1 1 0 1\n") == "nonpositive-value");
  CHECK(error_kind("R1 1 0 1\nR1 1 0 2\n") == "duplicate-branch");
  CHECK(error_kind("Q1 1 0 2\n") == "unknown-device");
  CHECK(error_kind("E1 1 0 2 0 1\n") == "unsupported-device");
  CHECK(error_kind("X1 1 0 sub\n") == "unsupported-device");
  CHECK(error_kind("R1 1 0 param=R\n") == "syntax-error");  // binding to an undeclared parameter
  CHECK(error_kind("R1 1 0 abc\n") == "syntax-error");
  CHECK(error_kind("R1 1 2 1\nR2 3 4 1\nR3 4 0 1\nR4 1 2 1\nR5 3 0 1\n") == "disconnected");
}

TEST_CASE("syntax errors carry line and column", "[netlist]") {
  try {
    parse_netlist("R1 1 0 100\nR2 1 0 1x\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() == 8);
  }
}

TEST_CASE("keywords are case-insensitive and comments are ignored", "[netlist]") {
  const CircuitGraph a = parse_netlist("# comment\nv1 1 0 sin(0 1 300)\nr1 1 0 50 # trailing\n");
  const CircuitGraph b = parse_netlist("V1 1 0 SIN(0 1 300)\nR1 1 0 50\n");
  CHECK(a.branches.size() == 2);
  CHECK(a.branches[0].device == b.branches[0].device);
  CHECK(a.branches[1].device == b.branches[1].device);
}

TEST_CASE("netlist round trip", "[netlist][property]") {
  for (const auto& name : fixture_names()) {
    const CircuitGraph g = load_fixture(name);
    CHECK(parse_netlist(to_netlist(g)) == g);
  }
  const CircuitGraph custom =
      parse_netlist("PARAM R 10 20\nI1 0 1 DC 0.001\nR1 1 2 param=R\nD1 2 0 IS=2e-14 VT=0.03\nC1 2 0 1e-6\n");
  CHECK(parse_netlist(to_netlist(custom)) == custom);
}

TEST_CASE("incidence matrices of the voltage-driven oscillator", "[netlist][incidence]") {
  const IncidenceSet inc = build_incidence(load_fixture("oscillator-v"));
  REQUIRE(inc.vsource.rows() == 3);
  REQUIRE(inc.vsource.cols() == 1);
  // V1 runs from node 1 to ground; stamping i_V with this column gives the
  // -1 entry of the source-current row.
  CHECK(inc.vsource(0, 0) == 1.0);
  CHECK(inc.vsource(1, 0) == 0.0);
  CHECK(inc.vsource(2, 0) == 0.0);
  CHECK(inc.resistive.cols() == 2);  // R1 and the diode
  CHECK(inc.inductive.cols() == 1);
  CHECK(inc.isource.cols() == 0);
}

TEST_CASE("incidence edge cases", "[netlist][incidence]") {
  const IncidenceSet single = build_incidence(parse_netlist("R1 1 0 10\n"));
  REQUIRE(single.resistive.rows() == 1);
  REQUIRE(single.resistive.cols() == 1);
  CHECK(single.resistive(0, 0) == 1.0);
  CHECK(single.capacitive.cols() == 0);
}

TEST_CASE("incidence columns sum to zero with the ground row restored", "[netlist][incidence][property]") {
  for (const auto& name : fixture_names()) {
    const IncidenceSet inc = build_incidence(load_fixture(name));
    for (const Matrix* a : {&inc.capacitive, &inc.resistive, &inc.inductive, &inc.vsource, &inc.isource}) {
      for (Index j = 0; j < a->cols(); ++j) {
        int plus = 0, minus = 0;
        for (Index i = 0; i < a->rows(); ++i) {
          const double v = (*a)(i, j);
          CHECK((v == 0.0 || v == 1.0 || v == -1.0));
          plus += v == 1.0;
          minus += v == -1.0;
        }
        CHECK(plus <= 1);
        CHECK(minus <= 1);
        // The deleted ground row holds minus the column sum, which must be in {-1, 0, 1}.
        CHECK(std::abs(a->col(j).sum()) <= 1.0);
      }
    }
  }
}

TEST_CASE("device Jacobians match finite differences", "[netlist][devices][property]") {
  const CircuitGraph rect = load_fixture("rectifier");
  const CircuitGraph osc = load_fixture("oscillator-v");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> volt(-0.8, 0.75);
  std::uniform_real_distribution<double> amp(-1.0, 1.0);
  std::uniform_real_distribution<double> temp(20.0, 90.0);
  for (const CircuitGraph* g : {&rect, &osc}) {
    for (const auto& b : g->branches) {
      // Sources have no device function; the two-port reports L(i) itself,
      // which is not the derivative of the flux L(i) i.
      if (b.device.kind == DeviceKind::VoltageSource || b.device.kind == DeviceKind::CurrentSource ||
          b.device.kind == DeviceKind::InductiveMultiport) {
        continue;
      }
      const bool inductive = b.device.kind == DeviceKind::Inductor;
      for (int k = 0; k < 20; ++k) {
        Vector p = g->nominal_parameters();
        if (g == &rect) p << temp(rng), temp(rng);
        const Index dim = 1;
        Vector arg(dim);
        for (Index i = 0; i < dim; ++i) arg(i) = inductive ? amp(rng) : volt(rng);
        const DeviceEval e = eval_device(b.device, arg, p);
        for (Index j = 0; j < dim; ++j) {
          const double h = 1e-6 * std::max(1.0, std::abs(arg(j)));
          Vector up = arg, down = arg;
          up(j) += h;
          down(j) -= h;
          const Vector fd = (eval_device(b.device, up, p).value - eval_device(b.device, down, p).value) / (2.0 * h);
          for (Index i = 0; i < fd.size(); ++i) {
            CHECK_THAT(e.jacobian(i, j), WithinAbs(fd(i), 1e-6 * (std::abs(fd(i)) + 1e-12)));
          }
        }
      }
    }
  }
}

TEST_CASE("transformer inductance matrix is symmetric positive definite", "[netlist][devices][property]") {
  const CircuitGraph rect = load_fixture("rectifier");
  const DeviceModel* k = nullptr;
  for (const auto& b : rect.branches) {
    if (b.device.kind == DeviceKind::InductiveMultiport) k = &b.device;
  }
  REQUIRE(k);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> amp(-2.0, 2.0);
  const Vector p = rect.nominal_parameters();
  for (int s = 0; s < 200; ++s) {
    const Vector i{{amp(rng), amp(rng)}};
    const DeviceEval e = eval_device(*k, i, p);
    const Matrix& l = e.jacobian;
    CHECK_THAT((e.value - l * i).norm(), WithinAbs(0.0, 1e-15));
    CHECK_THAT(l(0, 1), WithinAbs(l(1, 0), 1e-18));
    CHECK(l(0, 0) > 0.0);
    CHECK(l.determinant() > 0.0);
  }
}

TEST_CASE("thermal diode saturation current grows with temperature", "[netlist][devices]") {
  DeviceModel d;
  d.kind = DeviceKind::Diode;
  d.params = {{"IS", 1e-14}, {"TEMP", 27.0}, {"T0", 300.0}, {"EG", 1.12}};
  const Vector arg{{0.6}};
  const double g27 = eval_device(d, arg, Vector()).value(0);
  d.params["TEMP"] = 26.85;  // 300 K: the model reduces to IS/VT * exp(v/VT)
  const double vt = thermal_voltage(300.0);
  CHECK_THAT(eval_device(d, arg, Vector()).value(0), WithinRel(1e-14 / vt * std::exp(0.6 / vt), 1e-9));
  d.params["TEMP"] = 90.0;
  CHECK(eval_device(d, arg, Vector()).value(0) > g27);
}
