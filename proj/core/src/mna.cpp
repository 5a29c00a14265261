#include "dissect/mna.hpp"

#include "dissect/errors.hpp"

#include <array>
#include <cmath>

namespace dissect {

std::optional<std::size_t> StateLayout::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  return std::nullopt;
}

StateLayout StateLayout::generic(std::size_t n) {
  StateLayout l;
  l.potentials = n;
  for (std::size_t i = 0; i < n; ++i) l.names.push_back("x" + std::to_string(i + 1));
  return l;
}

IncidenceSet build_incidence(const CircuitGraph& graph) {
  const Index nodes = static_cast<Index>(graph.unknown_potentials());
  IncidenceSet inc;
  std::vector<std::pair<std::size_t, std::size_t>> cap, res, ind, vs, is;
  for (std::size_t b = 0; b < graph.branches.size(); ++b) {
    const auto& br = graph.branches[b];
    const std::pair<std::size_t, std::size_t> ends{br.terminals[0], br.terminals[1]};
    switch (br.device.kind) {
      case DeviceKind::Capacitor:
        cap.push_back(ends);
        inc.capacitor_branch.push_back(b);
        break;
      case DeviceKind::Resistor:
      case DeviceKind::Diode:
        res.push_back(ends);
        inc.resistor_branch.push_back(b);
        break;
      case DeviceKind::Inductor:
        ind.push_back(ends);
        inc.inductor_branch.push_back(b);
        inc.inductor_winding.push_back(0);
        break;
      case DeviceKind::InductiveMultiport:
        ind.push_back(ends);
        ind.emplace_back(br.terminals[2], br.terminals[3]);
        inc.inductor_branch.push_back(b);
        inc.inductor_branch.push_back(b);
        inc.inductor_winding.push_back(0);
        inc.inductor_winding.push_back(1);
        break;
      case DeviceKind::VoltageSource:
        vs.push_back(ends);
        inc.vsource_branch.push_back(b);
        break;
      case DeviceKind::CurrentSource:
        is.push_back(ends);
        inc.isource_branch.push_back(b);
        break;
    }
  }
  auto fill = [nodes](const std::vector<std::pair<std::size_t, std::size_t>>& cols) {
    Matrix a = Matrix::Zero(nodes, static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      // Node k >= 1 sits in row k-1; ground has no row.
      if (cols[c].first > 0) a(static_cast<Index>(cols[c].first) - 1, static_cast<Index>(c)) += 1.0;
      if (cols[c].second > 0) a(static_cast<Index>(cols[c].second) - 1, static_cast<Index>(c)) -= 1.0;
    }
    return a;
  };
  inc.capacitive = fill(cap);
  inc.resistive = fill(res);
  inc.inductive = fill(ind);
  inc.vsource = fill(vs);
  inc.isource = fill(is);
  return inc;
}

namespace {

constexpr double kExpLimit = 80.0;

// exp with linear continuation past kExpLimit; returns (value, derivative).
std::pair<double, double> limited_exp(double arg, bool& clamped) {
  if (arg <= kExpLimit) {
    const double e = std::exp(arg);
    return {e, e};
  }
  clamped = true;
  const double e = std::exp(kExpLimit);
  return {e * (1.0 + (arg - kExpLimit)), e};
}

struct TransformerCoefficients {
  double l0, a2, a4, ratio2, coup2;
};

TransformerCoefficients transformer_coefficients(const DeviceModel& d, const Vector& p) {
  return {d.get("L0", p), d.get("A2", p), d.get("A4", p), d.get("RATIO2", p), d.get("COUP2", p)};
}

constexpr double kPolynomialFloor = 0.1;

// Normalized self-inductance profile and its derivative.
std::pair<double, double> profile(const TransformerCoefficients& c, double i) {
  const double i2 = i * i;
  const double value = 1.0 + c.a2 * i2 + c.a4 * i2 * i2;
  if (value < kPolynomialFloor) return {kPolynomialFloor, 0.0};
  return {value, 2.0 * c.a2 * i + 4.0 * c.a4 * i2 * i};
}

Matrix transformer_inductance(const TransformerCoefficients& c, const Vector& i) {
  const double s1 = c.l0 * profile(c, i(0)).first;
  const double s2 = c.l0 * profile(c, i(1)).first;
  const double mutual = std::sqrt(c.coup2 * s1 * s2);
  Matrix l(2, 2);
  l << s1, mutual, mutual, c.ratio2 * s2;
  return l;
}

// d L(i) / d i_k for k = 0, 1.
std::array<Matrix, 2> transformer_inductance_derivative(const TransformerCoefficients& c, const Vector& i) {
  const auto [p1, d1] = profile(c, i(0));
  const auto [p2, d2] = profile(c, i(1));
  const double root = std::sqrt(c.coup2 * p1 * p2);
  std::array<Matrix, 2> out{Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  const double dm1 = root > 0.0 ? c.l0 * c.coup2 * d1 * p2 / (2.0 * root) : 0.0;
  const double dm2 = root > 0.0 ? c.l0 * c.coup2 * p1 * d2 / (2.0 * root) : 0.0;
  out[0] << c.l0 * d1, dm1, dm1, 0.0;
  out[1] << 0.0, dm2, dm2, c.ratio2 * c.l0 * d2;
  return out;
}

struct DiodeEval {
  double g;
  double dg;
  bool clamped = false;
};

DiodeEval diode(const DeviceModel& d, double v, const Vector& p) {
  DiodeEval out{0.0, 0.0};
  const double is0 = d.get("IS", p);
  if (!d.thermal()) {
    const double vt = d.get("VT", p);
    const auto [e, de] = limited_exp(v / vt, out.clamped);
    out.g = is0 * (e - 1.0);
    out.dg = is0 * de / vt;
    return out;
  }
  const double kelvin = celsius_to_kelvin(d.get("TEMP", p));
  const double t0 = d.get("T0", p);
  const double vt = thermal_voltage(kelvin);
  const double vt0 = thermal_voltage(t0);
  const double ratio = kelvin / t0;
  const double is = is0 * ratio * ratio * ratio * std::exp((d.get("EG", p) / vt0) * (1.0 - t0 / kelvin));
  const auto [e, de] = limited_exp(v / vt, out.clamped);
  out.g = is / vt * e;
  out.dg = is / (vt * vt) * de;
  return out;
}

std::string_view key_for(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::Resistor:
      return "R";
    case DeviceKind::Capacitor:
      return "C";
    default:
      return "L";
  }
}

void require_dimension(const Vector& arg, Index expected, const DeviceModel& d) {
  if (arg.size() != expected) {
    throw DimensionMismatch(to_string(d.kind) + " expects " + std::to_string(expected) + " argument(s), got " +
                            std::to_string(arg.size()));
  }
}

}  // namespace

DeviceEval eval_device(const DeviceModel& device, const Vector& arg, const Vector& p) {
  DeviceEval out;
  switch (device.kind) {
    case DeviceKind::Resistor: {
      require_dimension(arg, 1, device);
      const double g = 1.0 / device.get("R", p);
      out.value = Vector::Constant(1, g * arg(0));
      out.jacobian = Matrix::Constant(1, 1, g);
      break;
    }
    case DeviceKind::Diode: {
      require_dimension(arg, 1, device);
      const auto d = diode(device, arg(0), p);
      out.value = Vector::Constant(1, d.g);
      out.jacobian = Matrix::Constant(1, 1, d.dg);
      out.clamped = d.clamped;
      break;
    }
    case DeviceKind::Capacitor:
    case DeviceKind::Inductor: {
      require_dimension(arg, 1, device);
      const double c = device.get(std::string(key_for(device.kind)), p);
      out.value = Vector::Constant(1, c * arg(0));
      out.jacobian = Matrix::Constant(1, 1, c);
      break;
    }
    case DeviceKind::InductiveMultiport: {
      require_dimension(arg, 2, device);
      out.jacobian = transformer_inductance(transformer_coefficients(device, p), arg);
      out.value = out.jacobian * arg;
      break;
    }
    case DeviceKind::VoltageSource:
    case DeviceKind::CurrentSource:
      throw DimensionMismatch("sources have no device function");
  }
  return out;
}

namespace {

class MnaModel {
 public:
  explicit MnaModel(const CircuitGraph& g)
      : graph_(std::make_shared<CircuitGraph>(g)), inc_(std::make_shared<IncidenceSet>(build_incidence(g))) {
    layout_.potentials = graph_->unknown_potentials();
    layout_.inductor_currents = static_cast<std::size_t>(inc_->inductive.cols());
    layout_.source_currents = static_cast<std::size_t>(inc_->vsource.cols());
    for (std::size_t k = 1; k < graph_->nodes.size(); ++k) layout_.names.push_back("phi" + graph_->nodes[k]);
    for (std::size_t c = 0; c < inc_->inductor_branch.size(); ++c) {
      const auto& br = graph_->branches[inc_->inductor_branch[c]];
      std::string name = "i_" + br.name;
      if (br.device.kind == DeviceKind::InductiveMultiport) name += inc_->inductor_winding[c] == 0 ? "a" : "b";
      layout_.names.push_back(name);
    }
    for (auto b : inc_->vsource_branch) layout_.names.push_back("i_" + graph_->branches[b].name);
  }

  const StateLayout& layout() const { return layout_; }
  std::shared_ptr<const CircuitGraph> graph() const { return graph_; }
  std::shared_ptr<const IncidenceSet> incidence() const { return inc_; }

  Matrix mass(const Vector& x, const Vector& p) const {
    check(x, p);
    const Index n = static_cast<Index>(layout_.size());
    const Index np = static_cast<Index>(layout_.potentials);
    Matrix m = Matrix::Zero(n, n);
    const Vector phi = x.head(np);
    for (std::size_t c = 0; c < inc_->capacitor_branch.size(); ++c) {
      const auto& br = graph_->branches[inc_->capacitor_branch[c]];
      const auto col = inc_->capacitive.col(static_cast<Index>(c));
      const auto ev = eval_device(br.device, Vector::Constant(1, col.dot(phi)), p);
      finite(ev, br.name);
      m.topLeftCorner(np, np) += ev.jacobian(0, 0) * col * col.transpose();
    }
    for_each_inductor(x, p, [&](Index row, const Matrix& l, const std::string&) {
      m.block(row, row, l.rows(), l.cols()) = l;
    });
    return m;
  }

  Matrix stiffness(const Vector& x, const Vector& p, bool tangent) const {
    check(x, p);
    const Index n = static_cast<Index>(layout_.size());
    const Index np = static_cast<Index>(layout_.potentials);
    const Index nl = static_cast<Index>(layout_.inductor_currents);
    const Index nv = static_cast<Index>(layout_.source_currents);
    Matrix k = Matrix::Zero(n, n);
    const Vector phi = x.head(np);
    for (std::size_t c = 0; c < inc_->resistor_branch.size(); ++c) {
      const auto& br = graph_->branches[inc_->resistor_branch[c]];
      const auto col = inc_->resistive.col(static_cast<Index>(c));
      const double u = col.dot(phi);
      const auto ev = eval_device(br.device, Vector::Constant(1, u), p);
      finite(ev, br.name);
      double g = 0.0;
      if (br.device.kind == DeviceKind::Resistor) {
        g = ev.jacobian(0, 0);
      } else {
        g = ev.value(0);
        if (tangent) g += ev.jacobian(0, 0) * u;
      }
      k.topLeftCorner(np, np) += g * col * col.transpose();
    }
    k.block(0, np, np, nl) = inc_->inductive;
    k.block(np, 0, nl, np) = -inc_->inductive.transpose();
    k.block(0, np + nl, np, nv) = inc_->vsource;
    k.block(np + nl, 0, nv, np) = -inc_->vsource.transpose();
    return k;
  }

  Matrix mass_action(const Vector& x, const Vector& v, const Vector& p) const {
    check(x, p);
    const Index n = static_cast<Index>(layout_.size());
    Matrix j = Matrix::Zero(n, n);
    const Index base = static_cast<Index>(layout_.inductor_begin());
    for (std::size_t c = 0; c < inc_->inductor_branch.size(); ++c) {
      const auto& br = graph_->branches[inc_->inductor_branch[c]];
      if (br.device.kind != DeviceKind::InductiveMultiport || inc_->inductor_winding[c] != 0) continue;
      const Index row = base + static_cast<Index>(c);
      const auto d = transformer_inductance_derivative(transformer_coefficients(br.device, p), x.segment(row, 2));
      const Vector w = v.segment(row, 2);
      j.block(row, row, 2, 1) = d[0] * w;
      j.block(row, row + 1, 2, 1) = d[1] * w;
    }
    return j;
  }

  Vector source(double t, const Vector& p, bool rate) const {
    check_parameters(p);
    const Index n = static_cast<Index>(layout_.size());
    const Index np = static_cast<Index>(layout_.potentials);
    const Index nl = static_cast<Index>(layout_.inductor_currents);
    Vector f = Vector::Zero(n);
    for (std::size_t c = 0; c < inc_->isource_branch.size(); ++c) {
      const auto& w = graph_->branches[inc_->isource_branch[c]].device.waveform;
      f.head(np) += (rate ? w.derivative(t) : w.value(t)) * inc_->isource.col(static_cast<Index>(c));
    }
    for (std::size_t c = 0; c < inc_->vsource_branch.size(); ++c) {
      const auto& w = graph_->branches[inc_->vsource_branch[c]].device.waveform;
      f(np + nl + static_cast<Index>(c)) = rate ? w.derivative(t) : w.value(t);
    }
    return f;
  }

 private:
  template <typename Fn>
  void for_each_inductor(const Vector& x, const Vector& p, Fn&& fn) const {
    const Index base = static_cast<Index>(layout_.inductor_begin());
    for (std::size_t c = 0; c < inc_->inductor_branch.size(); ++c) {
      const auto& br = graph_->branches[inc_->inductor_branch[c]];
      const Index row = base + static_cast<Index>(c);
      if (br.device.kind == DeviceKind::InductiveMultiport) {
        if (inc_->inductor_winding[c] != 0) continue;
        const auto ev = eval_device(br.device, x.segment(row, 2), p);
        finite(ev, br.name);
        fn(row, ev.jacobian, br.name);
      } else {
        const auto ev = eval_device(br.device, x.segment(row, 1), p);
        finite(ev, br.name);
        fn(row, ev.jacobian, br.name);
      }
    }
  }

  static void finite(const DeviceEval& ev, const std::string& name) {
    if (!ev.value.allFinite() || !ev.jacobian.allFinite()) {
      throw NonFiniteError(name, "device evaluation produced a non-finite value");
    }
  }

  void check_parameters(const Vector& p) const {
    if (static_cast<std::size_t>(p.size()) != graph_->parameter_space.size()) {
      throw DimensionMismatch("expected " + std::to_string(graph_->parameter_space.size()) +
                              " parameters, got " + std::to_string(p.size()));
    }
  }

  void check(const Vector& x, const Vector& p) const {
    if (static_cast<std::size_t>(x.size()) != layout_.size()) {
      throw DimensionMismatch("expected a state of size " + std::to_string(layout_.size()) + ", got " +
                              std::to_string(x.size()));
    }
    if (!x.allFinite()) throw NonFiniteError("state", "state vector has non-finite entries");
    check_parameters(p);
  }

  std::shared_ptr<CircuitGraph> graph_;
  std::shared_ptr<IncidenceSet> inc_;
  StateLayout layout_;
};

}  // namespace

Vector DaeSystem::residual(const Vector& xdot, const Vector& x, double t, const Vector& p) const {
  return mass(x, p) * xdot + stiffness(x, p) * x + source(t, p);
}

Matrix DaeSystem::tangent(const Vector& x, const Vector& p) const {
  return stiffness_tangent ? stiffness_tangent(x, p) : stiffness(x, p);
}

Matrix DaeSystem::mass_jacobian(const Vector& x, const Vector& v, const Vector& p) const {
  if (mass_action) return mass_action(x, v, p);
  const Index n = static_cast<Index>(size());
  return Matrix::Zero(n, n);
}

DaeSystem build_dae(const CircuitGraph& graph) {
  auto model = std::make_shared<const MnaModel>(graph);
  DaeSystem sys;
  sys.layout = model->layout();
  sys.parameter_count = graph.parameter_space.size();
  sys.circuit = model->graph();
  sys.incidence = model->incidence();
  sys.mass = [model](const Vector& x, const Vector& p) { return model->mass(x, p); };
  sys.stiffness = [model](const Vector& x, const Vector& p) { return model->stiffness(x, p, false); };
  sys.stiffness_tangent = [model](const Vector& x, const Vector& p) { return model->stiffness(x, p, true); };
  sys.mass_action = [model](const Vector& x, const Vector& v, const Vector& p) {
    return model->mass_action(x, v, p);
  };
  sys.source = [model](double t, const Vector& p) { return model->source(t, p, false); };
  sys.source_rate = [model](double t, const Vector& p) { return model->source(t, p, true); };
  return sys;
}

Assembled assemble(const DaeSystem& system, const Vector& x, double t, const Vector& p) {
  if (static_cast<std::size_t>(x.size()) != system.size()) {
    throw DimensionMismatch("expected a state of size " + std::to_string(system.size()) + ", got " +
                            std::to_string(x.size()));
  }
  Assembled a{system.mass(x, p), system.stiffness(x, p), system.source(t, p)};
  if (!a.source.allFinite()) throw NonFiniteError("source", "source vector has non-finite entries");
  if (!a.mass.allFinite() || !a.stiffness.allFinite()) {
    throw NonFiniteError("system", "operator has non-finite entries");
  }
  return a;
}

}  // namespace dissect
