#include "dissect/decouple.hpp"

#include "dissect/errors.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace dissect {

namespace {

Vector reference_state_of(const DaeSystem& system, const DecoupleOptions& o) {
  if (o.reference_state.size() == 0) return Vector::Zero(static_cast<Index>(system.size()));
  if (static_cast<std::size_t>(o.reference_state.size()) != system.size()) {
    throw DimensionMismatch("reference state has the wrong size");
  }
  return o.reference_state;
}

Vector reference_parameters_of(const DaeSystem& system, const DecoupleOptions& o) {
  if (o.reference_parameters.size() != 0) {
    if (static_cast<std::size_t>(o.reference_parameters.size()) != system.parameter_count) {
      throw DimensionMismatch("reference parameters have the wrong size");
    }
    return o.reference_parameters;
  }
  if (system.circuit) return system.circuit->nominal_parameters();
  return Vector::Zero(static_cast<Index>(system.parameter_count));
}

// sigma_min / sigma_max, 1 for an empty matrix.
double relative_min_singular(const Matrix& a) {
  if (a.size() == 0) return 1.0;
  if (a.rows() != a.cols()) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  return s(0) > 0.0 ? s(s.size() - 1) / s(0) : 0.0;
}

// Full row rank test for a wide or square matrix.
bool full_row_rank(const Matrix& a, double tol) {
  if (a.rows() == 0) return true;
  if (a.cols() < a.rows()) return false;
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  return s(0) > 0.0 && s(a.rows() - 1) / s(0) > tol;
}

std::vector<std::string> names_of(const Matrix& map, const StateLayout& layout, const std::string& prefix) {
  std::vector<std::string> names;
  for (Index r = 0; r < map.rows(); ++r) {
    names.push_back(functional_name(map.row(r).transpose(), layout, prefix + std::to_string(r + 1)));
  }
  return names;
}

const std::vector<std::pair<Vector, Vector>>& samples_or_default(const DaeSystem& system,
                                                                 const DecoupleOptions& o,
                                                                 std::vector<std::pair<Vector, Vector>>& storage) {
  if (!o.samples.empty()) return o.samples;
  storage = default_samples(system, 8);
  return storage;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

}  // namespace

std::vector<std::pair<Vector, Vector>> default_samples(const DaeSystem& system, std::size_t count,
                                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> fraction(0.0, 1.0);
  std::vector<std::pair<Vector, Vector>> out;
  const Index n = static_cast<Index>(system.size());
  for (std::size_t k = 0; k < count; ++k) {
    Vector x(n);
    for (Index i = 0; i < n; ++i) x(i) = unit(rng);
    Vector p = Vector::Zero(static_cast<Index>(system.parameter_count));
    if (system.circuit) {
      for (std::size_t i = 0; i < system.circuit->parameter_space.size(); ++i) {
        const auto& r = system.circuit->parameter_space[i];
        p(static_cast<Index>(i)) = r.lower + fraction(rng) * (r.upper - r.lower);
      }
    }
    out.emplace_back(std::move(x), std::move(p));
  }
  return out;
}

std::string functional_name(const Vector& row, const StateLayout& layout, const std::string& fallback) {
  std::vector<std::pair<Index, double>> nz;
  for (Index i = 0; i < row.size(); ++i) {
    if (std::abs(row(i)) > 1e-12) nz.emplace_back(i, row(i));
  }
  auto is = [](double v, double target) { return std::abs(v - target) <= 1e-12; };
  if (static_cast<std::size_t>(row.size()) != layout.names.size()) return fallback;
  if (nz.size() == 1 && is(nz[0].second, 1.0)) return layout.names[static_cast<std::size_t>(nz[0].first)];
  if (nz.size() == 2 && static_cast<std::size_t>(nz[1].first) < layout.potentials) {
    const auto& a = layout.names[static_cast<std::size_t>(nz[0].first)];
    const auto& b = layout.names[static_cast<std::size_t>(nz[1].first)];
    auto node = [](const std::string& s) { return s.rfind("phi", 0) == 0 ? s.substr(3) : s; };
    if (is(nz[0].second, 1.0) && is(nz[1].second, -1.0)) return "v_" + node(a) + "_" + node(b);
    if (is(nz[0].second, -1.0) && is(nz[1].second, 1.0)) return "v_" + node(b) + "_" + node(a);
  }
  return fallback;
}

// ---------------------------------------------------------------- level 1

Matrix DecouplingL1::mass_tilde(const Vector& x, const Vector& p) const {
  return V().transpose() * system.mass(x, p) * P();
}
Matrix DecouplingL1::k_tilde_p(const Vector& x, const Vector& p) const {
  return V().transpose() * system.stiffness(x, p) * P();
}
Matrix DecouplingL1::k_tilde_q(const Vector& x, const Vector& p) const {
  return V().transpose() * system.stiffness(x, p) * Q();
}
Matrix DecouplingL1::k_bar_p(const Vector& x, const Vector& p) const {
  return W().transpose() * system.stiffness(x, p) * P();
}
Matrix DecouplingL1::k_bar_q(const Vector& x, const Vector& p) const {
  return W().transpose() * system.stiffness(x, p) * Q();
}
Vector DecouplingL1::f_tilde(double t, const Vector& p) const { return V().transpose() * system.source(t, p); }
Vector DecouplingL1::f_bar(double t, const Vector& p) const { return W().transpose() * system.source(t, p); }

Vector DecouplingL1::differential_residual(const Vector& xt_dot, const Vector& xt, const Vector& xb, double t,
                                           const Vector& p) const {
  const Vector x = state(xt, xb);
  return V().transpose() * (system.mass(x, p) * (P() * xt_dot) + system.stiffness(x, p) * x + system.source(t, p));
}

Vector DecouplingL1::algebraic_residual(const Vector& xt, const Vector& xb, double t, const Vector& p) const {
  const Vector x = state(xt, xb);
  return W().transpose() * (system.stiffness(x, p) * x + system.source(t, p));
}

Matrix DecouplingL1::algebraic_jacobian(const Vector& xt, const Vector& xb, const Vector& p) const {
  return W().transpose() * system.tangent(state(xt, xb), p) * Q();
}

DecouplingL1 decouple_level1(const DaeSystem& system, const DecoupleOptions& options) {
  DecouplingL1 d;
  d.system = system;
  d.reference_state = reference_state_of(system, options);
  d.reference_parameters = reference_parameters_of(system, options);
  const Matrix m0 = system.mass(d.reference_state, d.reference_parameters);

  if (options.topological && system.incidence) {
    const auto tb = topological_bases(*system.incidence);
    if (!tb.fallback && kernel_residual(m0, tb.first.kernel) <= options.kernel_tol) {
      d.right = tb.first;
      d.topological = true;
    }
  }
  if (!d.topological) d.right = preferred_basis(m0, options.rank_tol);
  if (d.topological && (m0 - m0.transpose()).cwiseAbs().maxCoeff() == 0.0) {
    d.left = d.right;
  } else {
    d.left = preferred_basis(m0.transpose(), options.rank_tol);
  }
  if (d.left.kernel.cols() != d.right.kernel.cols()) {
    throw AssumptionViolation("M is not square or its left and right kernels differ in dimension");
  }
  d.splitter = Splitter(d.right);

  std::vector<std::pair<Vector, Vector>> storage;
  for (const auto& [x, p] : samples_or_default(system, options, storage)) {
    const Matrix m = system.mass(x, p);
    const double res = std::max(kernel_residual(m, d.Q()), kernel_residual(m.transpose(), d.W()));
    if (res > options.kernel_tol) {
      throw AssumptionViolation("kernel of M varies across sample states (residual " + fmt(res) + ")");
    }
    if (d.differential_size() > 0 && relative_min_singular(d.mass_tilde(x, p)) <= options.rank_tol) {
      throw AssumptionViolation("kernel of M grows at a sample state");
    }
  }

  const Matrix& inv = d.splitter.inverse();
  d.differential_map = inv.topRows(d.differential_size());
  d.algebraic_map = inv.bottomRows(d.algebraic_size());
  d.differential_names = names_of(d.differential_map, system.layout, "xt");
  d.algebraic_names = names_of(d.algebraic_map, system.layout, "xb");
  return d;
}

// ---------------------------------------------------------------- level 2

Vector DecouplingL2::xt(const Level2Parts& parts) const { return tilde_split.combine(parts.xtp, parts.xtq); }
Vector DecouplingL2::xb(const Level2Parts& parts) const { return bar_split.combine(parts.xbp, parts.xbq); }

Vector DecouplingL2::state(const Level2Parts& parts) const { return level1.state(xt(parts), xb(parts)); }

Level2Parts DecouplingL2::split(const Vector& x) const {
  const auto first = level1.split(x);
  const auto t = tilde_split.split(first.complement_part);
  const auto b = bar_split.split(first.kernel_part);
  return {t.kernel_part, t.complement_part, b.complement_part, b.kernel_part};
}

Matrix DecouplingL2::w_tilde(const Vector& x, const Vector& p) const {
  const Matrix& w_ref = tilde_left.kernel;
  if (w_ref.cols() == 0 || tilde.kernel.cols() == 0) return w_ref;
  const Matrix a = level1.mass_tilde(x, p) * tilde.kernel;
  const Matrix& v = tilde_left.complement;
  const Matrix s = a.transpose() * v;
  return w_ref - v * s.fullPivLu().solve(a.transpose() * w_ref);
}

Vector DecouplingL2::eq_xtp(const Level2Parts& parts, double t, const Vector& p) const {
  return bar_left.kernel.transpose() * level1.algebraic_residual(xt(parts), xb(parts), t, p);
}

Vector DecouplingL2::eq_xbp(const Level2Parts& parts, double t, const Vector& p) const {
  return bar_left.complement.transpose() * level1.algebraic_residual(xt(parts), xb(parts), t, p);
}

Vector DecouplingL2::eq_xbq(const Level2Parts& parts, const Vector& xtp_dot, double t, const Vector& p) const {
  const Vector x = state(parts);
  const Vector xt_dot = tilde.complement * xtp_dot;
  return w_tilde(x, p).transpose() * level1.differential_residual(xt_dot, xt(parts), xb(parts), t, p);
}

Vector DecouplingL2::ode_residual(const Level2Parts& parts, const Vector& xtq_dot, const Vector& xtp_dot, double t,
                                  const Vector& p) const {
  const Vector xt_dot = tilde.complement * xtp_dot + tilde.kernel * xtq_dot;
  return tilde_left.complement.transpose() * level1.differential_residual(xt_dot, xt(parts), xb(parts), t, p);
}

DecouplingL2 decouple_level2(const DecouplingL1& level1, const DecoupleOptions& options) {
  DecouplingL2 d;
  d.level1 = level1;
  const Vector& x0 = level1.reference_state;
  const Vector& p0 = level1.reference_parameters;
  const Matrix kbq = level1.k_bar_q(x0, p0);
  if (kbq.rows() == 0 || relative_min_singular(kbq) > options.rank_tol) {
    throw WrongIndex("system is index 1: Kbar_Q is regular");
  }

  bool topo = false;
  if (level1.topological && level1.system.incidence) {
    const auto tb = topological_bases(*level1.system.incidence);
    if (!tb.fallback && kernel_residual(kbq, tb.second.kernel) <= options.kernel_tol &&
        kernel_residual(kbq.transpose(), tb.second.kernel) <= options.kernel_tol &&
        tb.second.kernel.cols() == nullspace_basis(kbq, options.rank_tol).kernel.cols()) {
      d.bar = tb.second;
      d.bar_left = tb.second;
      topo = true;
    }
  }
  if (!topo) {
    d.bar = preferred_basis(kbq, options.rank_tol);
    d.bar_left = preferred_basis(kbq.transpose(), options.rank_tol);
  }
  if (d.bar.kernel.cols() != d.bar_left.kernel.cols()) {
    throw AssumptionViolation("left and right kernels of Kbar_Q differ in dimension");
  }

  const Matrix wkp = d.bar_left.kernel.transpose() * level1.k_bar_p(x0, p0);
  d.tilde = preferred_basis(wkp, options.rank_tol);
  if (!full_row_rank(wkp * d.tilde.complement, options.rank_tol) ||
      d.tilde.complement.cols() != d.bar_left.kernel.cols()) {
    throw AssumptionViolation("Wbarᵀ Kbar_P Ptil is singular: the DAE is underdetermined");
  }

  const Matrix mq = level1.mass_tilde(x0, p0) * d.tilde.kernel;
  d.tilde_left = preferred_basis(mq.transpose(), options.rank_tol);
  d.bar_split = Splitter(d.bar);
  d.tilde_split = Splitter(d.tilde);

  const Vector zero_xb = Vector::Zero(level1.algebraic_size());
  auto wkq = [&](const Vector& x, const Vector& p) {
    return Matrix(d.w_tilde(x, p).transpose() * level1.k_tilde_q(x, p) * d.bar.kernel);
  };
  const Matrix index_block = wkq(x0, p0);
  if (index_block.rows() != index_block.cols() || relative_min_singular(index_block) <= options.rank_tol) {
    throw IndexTooHigh("Wtilᵀ Ktil_Q Qbar is singular: index exceeds 2");
  }

  std::vector<std::pair<Vector, Vector>> storage;
  for (const auto& [x, p] : samples_or_default(level1.system, options, storage)) {
    const Matrix k = level1.k_bar_q(x, p);
    const double res = std::max({kernel_residual(k, d.bar.kernel), kernel_residual(k.transpose(), d.bar_left.kernel),
                                 kernel_residual(d.bar_left.kernel.transpose() * level1.k_bar_p(x, p),
                                                 d.tilde.kernel)});
    if (res > options.kernel_tol) {
      throw AssumptionViolation("second-level kernels vary across sample states (residual " + fmt(res) + ")");
    }
  }

  const Matrix& bar_inv = d.bar_split.inverse();
  const Matrix& tilde_inv = d.tilde_split.inverse();
  d.xtp_map = tilde_inv.topRows(d.dim_xtp()) * level1.differential_map;
  d.xtq_map = tilde_inv.bottomRows(d.dim_xtq()) * level1.differential_map;
  d.xbp_map = bar_inv.topRows(d.dim_xbp()) * level1.algebraic_map;
  d.xbq_map = bar_inv.bottomRows(d.dim_xbq()) * level1.algebraic_map;
  const auto& layout = level1.system.layout;
  d.xtq_names = names_of(d.xtq_map, layout, "xtq");
  d.xtp_names = names_of(d.xtp_map, layout, "xtp");
  d.xbp_names = names_of(d.xbp_map, layout, "xbp");
  d.xbq_names = names_of(d.xbq_map, layout, "xbq");
  return d;
}

// ---------------------------------------------------------------- verification

namespace {

void level1_checks(const DecouplingL1& d, const std::vector<std::pair<Vector, Vector>>& samples, double tol,
                   VerificationReport& r, bool check_kbar_q) {
  r.samples = samples.size();
  r.min_mass_tilde = std::numeric_limits<double>::infinity();
  r.min_kbar_q = std::numeric_limits<double>::infinity();
  bool mass_singular = false, kbq_singular = false, underdetermined = false;
  for (const auto& [x, p] : samples) {
    const Matrix m = d.system.mass(x, p);
    r.max_kernel_residual = std::max(
        {r.max_kernel_residual, kernel_residual(m, d.Q()), kernel_residual(m.transpose(), d.W())});
    const Matrix mt = d.mass_tilde(x, p);
    r.min_mass_tilde = std::min(r.min_mass_tilde, min_singular_value(mt));
    if (relative_min_singular(mt) <= tol) mass_singular = true;
    const Matrix kbq = d.k_bar_q(x, p);
    r.min_kbar_q = std::min(r.min_kbar_q, kbq.size() ? min_singular_value(kbq) : r.min_kbar_q);
    // At level 2 the regularity of the split blocks is checked instead; an
    // off diode makes this block look rank deficient at relative tolerance.
    if (relative_min_singular(kbq) <= tol && check_kbar_q) {
      kbq_singular = true;
      Matrix block(kbq.rows(), d.k_bar_p(x, p).cols() + kbq.cols());
      block << d.k_bar_p(x, p), kbq;
      if (!full_row_rank(block, tol) || block.cwiseAbs().maxCoeff() == 0.0) underdetermined = true;
    }
  }
  if (r.max_kernel_residual > 1e-9) {
    r.pass = false;
    r.diagnostics.push_back("kernel of M not constant across samples");
  }
  if (mass_singular) {
    r.pass = false;
    r.diagnostics.push_back("Mtil singular at a sample state");
  }
  if (underdetermined) {
    r.pass = false;
    r.diagnostics.push_back("underdetermined: algebraic equations are rank deficient");
  } else if (check_kbar_q && kbq_singular) {
    r.pass = false;
    r.diagnostics.push_back("Kbar_Q singular at a sample state: index exceeds 1");
  }
}

}  // namespace

VerificationReport verify_decoupling(const DecouplingL1& d, const std::vector<std::pair<Vector, Vector>>& samples,
                                     double tol) {
  VerificationReport r;
  level1_checks(d, samples, tol, r, true);
  return r;
}

VerificationReport verify_decoupling(const DecouplingL2& d, const std::vector<std::pair<Vector, Vector>>& samples,
                                     double tol) {
  VerificationReport r;
  level1_checks(d.level1, samples, tol, r, false);
  r.min_vmq = r.min_wkq = r.min_wkp = std::numeric_limits<double>::infinity();
  bool vmq = false, wkq = false, wkp = false;
  for (const auto& [x, p] : samples) {
    const Matrix a = d.tilde_left.complement.transpose() * d.level1.mass_tilde(x, p) * d.tilde.kernel;
    const Matrix b = d.w_tilde(x, p).transpose() * d.level1.k_tilde_q(x, p) * d.bar.kernel;
    const Matrix c = d.bar_left.kernel.transpose() * d.level1.k_bar_p(x, p) * d.tilde.complement;
    r.min_vmq = std::min(r.min_vmq, min_singular_value(a));
    r.min_wkq = std::min(r.min_wkq, min_singular_value(b));
    r.min_wkp = std::min(r.min_wkp, min_singular_value(c));
    vmq |= relative_min_singular(a) <= tol;
    wkq |= relative_min_singular(b) <= tol;
    wkp |= relative_min_singular(c) <= tol;
    const Matrix k = d.level1.k_bar_q(x, p);
    r.max_kernel_residual = std::max({r.max_kernel_residual, kernel_residual(k, d.bar.kernel),
                                      kernel_residual(k.transpose(), d.bar_left.kernel),
                                      kernel_residual(d.bar_left.kernel.transpose() * d.level1.k_bar_p(x, p),
                                                      d.tilde.kernel)});
  }
  if (r.max_kernel_residual > 1e-9 &&
      std::find(r.diagnostics.begin(), r.diagnostics.end(), "kernel of M not constant across samples") ==
          r.diagnostics.end()) {
    r.pass = false;
    r.diagnostics.push_back("second-level kernels not constant across samples");
  }
  if (vmq) {
    r.pass = false;
    r.diagnostics.push_back("Vtilᵀ Mtil Qtil singular at a sample state");
  }
  if (wkp) {
    r.pass = false;
    r.diagnostics.push_back("underdetermined: Wbarᵀ Kbar_P Ptil singular at a sample state");
  }
  if (wkq) {
    r.pass = false;
    r.diagnostics.push_back("Wtilᵀ Ktil_Q Qbar singular at a sample state: index exceeds 2");
  }
  return r;
}

int detect_index_numeric(const DaeSystem& system, const DecoupleOptions& options) {
  DecoupleOptions o = options;
  o.topological = false;
  const DecouplingL1 l1 = decouple_level1(system, o);
  const Matrix kbq = l1.k_bar_q(l1.reference_state, l1.reference_parameters);
  if (kbq.rows() == 0 || relative_min_singular(kbq) > o.rank_tol) return 1;
  decouple_level2(l1, o);
  return 2;
}

IndexReport detect_index(const CircuitGraph& graph, const DecoupleOptions& options) {
  IndexReport r = detect_index_topological(graph);
  const DaeSystem system = build_dae(graph);
  r.numeric_index = detect_index_numeric(system, options);
  const DecouplingL1 l1 = decouple_level1(system, options);
  const Matrix kbq = l1.k_bar_q(l1.reference_state, l1.reference_parameters);
  if (kbq.size() > 0) {
    Eigen::JacobiSVD<Matrix> svd(kbq);
    const auto& s = svd.singularValues();
    r.kbar_q_min_singular = s(s.size() - 1);
    r.kbar_q_condition = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
  }
  if (r.numeric_index == 2) {
    const DecouplingL2 l2 = decouple_level2(l1, options);
    const Vector& x0 = l1.reference_state;
    const Vector& p0 = l1.reference_parameters;
    r.index2_min_singular =
        min_singular_value(l2.w_tilde(x0, p0).transpose() * l1.k_tilde_q(x0, p0) * l2.bar.kernel);
  }
  return r;
}

}  // namespace dissect
