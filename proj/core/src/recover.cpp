#include "dissect/recover.hpp"

#include "dissect/errors.hpp"

#include <algorithm>
#include <optional>
#include <random>

namespace dissect {

namespace {

void require_size(const Vector& v, Index n, const char* what) {
  if (v.size() != n) {
    throw DimensionMismatch(std::string(what) + " has size " + std::to_string(v.size()) + ", expected " +
                            std::to_string(n));
  }
}

Matrix hstack(const Matrix& a, const Matrix& b) {
  Matrix m(a.rows(), a.cols() + b.cols());
  m << a, b;
  return m;
}

Vector vstack(const Vector& a, const Vector& b) {
  Vector v(a.size() + b.size());
  v << a, b;
  return v;
}

}  // namespace

Vector recover_index1(const DecouplingL1& d, const Vector& xt, double t, const Vector& p, const NewtonConfig& cfg,
                      const Vector& guess, NewtonStats* stats) {
  require_size(xt, d.differential_size(), "differential coordinates");
  Vector start = guess.size() ? guess : Vector::Zero(d.algebraic_size());
  require_size(start, d.algebraic_size(), "algebraic guess");
  return newton_solve([&](const Vector& xb) { return d.algebraic_residual(xt, xb, t, p); },
                      [&](const Vector& xb) { return d.algebraic_jacobian(xt, xb, p); }, start, cfg, stats);
}

Vector solve_xtp(const DecouplingL2& d, const Level2Parts& context, double t, const Vector& p,
                 const NewtonConfig& cfg, NewtonStats* stats) {
  require_size(context.xtq, d.dim_xtq(), "xtq");
  Level2Parts parts = context;
  if (parts.xtp.size() != d.dim_xtp()) parts.xtp = Vector::Zero(d.dim_xtp());
  if (parts.xbp.size() != d.dim_xbp()) parts.xbp = Vector::Zero(d.dim_xbp());
  if (parts.xbq.size() != d.dim_xbq()) parts.xbq = Vector::Zero(d.dim_xbq());
  const auto& l1 = d.level1;
  auto residual = [&](const Vector& xtp) {
    Level2Parts q = parts;
    q.xtp = xtp;
    return d.eq_xtp(q, t, p);
  };
  auto jacobian = [&](const Vector& xtp) {
    Level2Parts q = parts;
    q.xtp = xtp;
    return Matrix(d.bar_left.kernel.transpose() * l1.W().transpose() * l1.system.tangent(d.state(q), p) * l1.P() *
                  d.tilde.complement);
  };
  return newton_solve(residual, jacobian, parts.xtp, cfg, stats);
}

Level2Parts solve_xb_joint(const DecouplingL2& d, const Level2Parts& context, const Vector& xtp_dot, double t,
                           const Vector& p, const NewtonConfig& cfg, NewtonStats* stats) {
  require_size(context.xtq, d.dim_xtq(), "xtq");
  require_size(context.xtp, d.dim_xtp(), "xtp");
  require_size(xtp_dot, d.dim_xtp(), "xtp rate");
  Level2Parts parts = context;
  if (parts.xbp.size() != d.dim_xbp()) parts.xbp = Vector::Zero(d.dim_xbp());
  if (parts.xbq.size() != d.dim_xbq()) parts.xbq = Vector::Zero(d.dim_xbq());
  const Index np = d.dim_xbp();
  const auto& l1 = d.level1;
  auto with = [&](const Vector& z) {
    Level2Parts q = parts;
    q.xbp = z.head(np);
    q.xbq = z.tail(z.size() - np);
    return q;
  };
  auto residual = [&](const Vector& z) {
    const Level2Parts q = with(z);
    return vstack(d.eq_xbp(q, t, p), d.eq_xbq(q, xtp_dot, t, p));
  };
  const Matrix bar_basis = hstack(d.bar.complement, d.bar.kernel);
  const Vector xt_dot = d.tilde.complement * xtp_dot;
  auto jacobian = [&](const Vector& z) {
    const Level2Parts q = with(z);
    const Vector x = d.state(q);
    const Matrix tq = l1.system.tangent(x, p) * l1.Q() * bar_basis;
    const Matrix mq = l1.system.mass_jacobian(x, l1.P() * xt_dot, p) * l1.Q() * bar_basis;
    Matrix j(z.size(), z.size());
    j << d.bar_left.complement.transpose() * l1.W().transpose() * tq,
        d.w_tilde(x, p).transpose() * l1.V().transpose() * (tq + mq);
    return j;
  };
  const Vector z = newton_solve(residual, jacobian, vstack(parts.xbp, parts.xbq), cfg, stats);
  return with(z);
}

Index2Recovery recover_index2(const DecouplingL2& d, const Vector& xtq_now, const Vector& xtq_next, double t,
                              double dt, const Vector& p, const NewtonConfig& cfg, const Level2Parts* guess) {
  if (!(dt > 0.0)) throw Error("invalid-argument", "backward-difference increment must be positive");
  require_size(xtq_now, d.dim_xtq(), "xtq(t)");
  require_size(xtq_next, d.dim_xtq(), "xtq(t + dt)");
  Level2Parts context = guess ? *guess : Level2Parts{};
  context.xtq = xtq_now;
  NewtonStats s1, s2, s3;
  const Vector xtp_now = solve_xtp(d, context, t, p, cfg, &s1);
  Level2Parts next = context;
  next.xtq = xtq_next;
  next.xtp = xtp_now;
  const Vector xtp_next = solve_xtp(d, next, t + dt, p, cfg, &s2);
  Index2Recovery out;
  out.dt = dt;
  out.xtp_dot = (xtp_next - xtp_now) / dt;
  context.xtp = xtp_now;
  out.parts = solve_xb_joint(d, context, out.xtp_dot, t, p, cfg, &s3);
  out.iterations = s1.iterations + s2.iterations + s3.iterations;
  return out;
}

Vector recombine(const DecouplingL1& d, const Vector& xt, const Vector& xb) {
  require_size(xt, d.differential_size(), "differential coordinates");
  require_size(xb, d.algebraic_size(), "algebraic coordinates");
  return d.state(xt, xb);
}

Vector recombine(const DecouplingL2& d, const Level2Parts& parts) {
  require_size(parts.xtq, d.dim_xtq(), "xtq");
  require_size(parts.xtp, d.dim_xtp(), "xtp");
  require_size(parts.xbp, d.dim_xbp(), "xbp");
  require_size(parts.xbq, d.dim_xbq(), "xbq");
  return d.state(parts);
}

double consistency_error(const DecouplingL1& d, const Vector& x, double t, const Vector& p) {
  const auto s = d.split(x);
  return d.algebraic_residual(s.complement_part, s.kernel_part, t, p).norm();
}

double consistency_error(const DecouplingL2& d, const Level2Parts& parts, const Vector& xtp_dot, double t,
                         const Vector& p) {
  return vstack(vstack(d.eq_xtp(parts, t, p), d.eq_xbp(parts, t, p)), d.eq_xbq(parts, xtp_dot, t, p)).norm();
}

std::vector<Probe> default_probes(Index dim, double t_end, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> when(0.0, t_end);
  std::vector<Probe> probes;
  for (std::size_t k = 0; k < count; ++k) {
    Probe pr;
    pr.t = when(rng);
    pr.differential.resize(dim);
    pr.rate.resize(dim);
    for (Index i = 0; i < dim; ++i) pr.differential(i) = 0.1 * unit(rng);
    for (Index i = 0; i < dim; ++i) pr.rate(i) = 100.0 * unit(rng);
    probes.push_back(std::move(pr));
  }
  return probes;
}

namespace {

constexpr double kInsensitivity = 1e-12;

Vector corner(const std::vector<ParameterRange>& space, std::size_t k, bool upper) {
  Vector p(static_cast<Index>(space.size()));
  for (std::size_t i = 0; i < space.size(); ++i) p(static_cast<Index>(i)) = 0.5 * (space[i].lower + space[i].upper);
  p(static_cast<Index>(k)) = upper ? space[k].upper : space[k].lower;
  return p;
}

template <typename Eval>
std::vector<std::string> insensitive(const std::vector<ParameterRange>& space, const std::vector<Probe>& probes,
                                     Eval&& eval) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < space.size(); ++k) {
    bool unchanged = true;
    std::size_t usable = 0;
    for (const auto& probe : probes) {
      std::pair<Vector, double> lo, hi;
      try {
        lo = eval(probe, corner(space, k, false));
        hi = eval(probe, corner(space, k, true));
      } catch (const Error&) {
        continue;  // no consistent state at this probe for one of the bounds
      }
      ++usable;
      if ((hi.first - lo.first).norm() > kInsensitivity * std::max({lo.second, hi.second, 1e-300})) {
        unchanged = false;
        break;
      }
    }
    if (unchanged && usable > 0) out.push_back(space[k].name);
  }
  return out;
}

}  // namespace

std::vector<std::string> ae_only_parameters(const DecouplingL1& d, const std::vector<ParameterRange>& space,
                                            const std::vector<Probe>& probes, const NewtonConfig& cfg) {
  return insensitive(space, probes, [&](const Probe& pr, const Vector& p) {
    const Vector guess = pr.state.size() ? Vector(d.split(pr.state).kernel_part) : Vector();
    const Vector xb = recover_index1(d, pr.differential, pr.t, p, cfg, guess);
    const Vector x = d.state(pr.differential, xb);
    const Matrix vt = d.V().transpose();
    const Vector mass = vt * d.system.mass(x, p) * (d.P() * pr.rate);
    const Vector stiff = vt * d.system.stiffness(x, p) * x;
    const Vector src = vt * d.system.source(pr.t, p);
    return std::pair<Vector, double>{mass + stiff + src, mass.norm() + stiff.norm() + src.norm()};
  });
}

std::vector<std::string> ae_only_parameters(const DecouplingL2& d, const std::vector<ParameterRange>& space,
                                            const std::vector<Probe>& probes, const NewtonConfig& cfg) {
  constexpr double kDt = 1e-7;
  return insensitive(space, probes, [&](const Probe& pr, const Vector& p) {
    std::optional<Level2Parts> guess;
    if (pr.state.size()) guess = d.split(pr.state);
    const auto rec = recover_index2(d, pr.differential, pr.differential + kDt * pr.rate, pr.t, kDt, p, cfg,
                                    guess ? &*guess : nullptr);
    const Vector x = d.state(rec.parts);
    const auto& l1 = d.level1;
    const Matrix proj = d.tilde_left.complement.transpose() * l1.V().transpose();
    const Vector xt_dot = d.tilde.complement * rec.xtp_dot + d.tilde.kernel * pr.rate;
    const Vector mass = proj * l1.system.mass(x, p) * (l1.P() * xt_dot);
    const Vector stiff = proj * l1.system.stiffness(x, p) * x;
    const Vector src = proj * l1.system.source(pr.t, p);
    return std::pair<Vector, double>{mass + stiff + src, mass.norm() + stiff.norm() + src.norm()};
  });
}

}  // namespace dissect
