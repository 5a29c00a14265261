#include "dissect/newton.hpp"

#include "dissect/errors.hpp"

#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <sstream>

namespace dissect {

void NewtonConfig::validate() const {
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0)) throw Error("invalid-config", "Newton tolerances must be positive");
  if (max_iter < 1) throw Error("invalid-config", "Newton max_iter must be at least 1");
  if (!(singular_shift >= 0.0)) throw Error("invalid-config", "Newton singular_shift must be non-negative");
}

Matrix finite_difference_jacobian(const ResidualFn& residual, const Vector& y, double rel_step) {
  const Vector r0 = residual(y);
  Matrix j(r0.size(), y.size());
  Vector yp = y;
  for (Index k = 0; k < y.size(); ++k) {
    const double h = rel_step * std::max(1.0, std::abs(y(k)));
    yp(k) = y(k) + h;
    const Vector plus = residual(yp);
    yp(k) = y(k) - h;
    const Vector minus = residual(yp);
    yp(k) = y(k);
    j.col(k) = (plus - minus) / (2.0 * h);
  }
  return j;
}

namespace {

double safe_norm(const Vector& r) {
  const double n = r.norm();
  return std::isfinite(n) ? n : std::numeric_limits<double>::infinity();
}

}  // namespace

Vector newton_solve(const ResidualFn& residual, const JacobianFn& jacobian, const Vector& guess,
                    const NewtonConfig& cfg, NewtonStats* stats) {
  cfg.validate();
  if (!guess.allFinite()) throw NoConvergence("Newton guess has non-finite entries", 0);
  Vector y = guess;
  Vector r = residual(y);
  double norm = safe_norm(r);
  if (!std::isfinite(norm)) throw NoConvergence("residual is not finite at the initial guess", 0);
  const double target = cfg.abs_tol + cfg.rel_tol * norm;
  int it = 0;
  auto finish = [&]() {
    if (stats) {
      stats->iterations = it;
      stats->residual_norm = norm;
    }
    return y;
  };
  if (y.size() == 0) return finish();
  for (; it < cfg.max_iter; ++it) {
    if (norm <= target) return finish();
    const Matrix j = (cfg.analytic_jacobian && jacobian) ? jacobian(y) : finite_difference_jacobian(residual, y, cfg.fd_step);
    if (!j.allFinite()) throw SingularJacobian("Jacobian has non-finite entries");
    // Reverse-biased diodes leave floating nodes pinned by conductances many
    // orders below the largest pivot, so only near-exact zeros count as singular.
    Eigen::FullPivLU<Matrix> lu(j);
    lu.setThreshold(1e-30);
    bool shifted = false;
    if (!lu.isInvertible() && cfg.singular_shift > 0.0 && j.rows() == j.cols()) {
      lu.compute(j + cfg.singular_shift * Matrix::Identity(j.rows(), j.cols()));
      shifted = true;
    }
    if (!lu.isInvertible()) throw SingularJacobian("Jacobian is singular at iteration " + std::to_string(it));
    const Vector dx = -lu.solve(r);
    if (!dx.allFinite()) throw SingularJacobian("Newton step is not finite at iteration " + std::to_string(it));

    double lambda = 1.0;
    Vector trial = y + dx;
    Vector r_trial = residual(trial);
    double n_trial = safe_norm(r_trial);
    if (cfg.damping == Damping::LineSearchHalving) {
      for (int h = 0; h < 30 && !(n_trial < norm); ++h) {
        lambda *= 0.5;
        trial = y + lambda * dx;
        r_trial = residual(trial);
        n_trial = safe_norm(r_trial);
      }
      if (!(n_trial < norm)) {
        if (dx.norm() <= 1e-13 * y.norm()) {
          ++it;
          return finish();
        }
        std::ostringstream msg;
        msg << "line search found no decrease at iteration " << it << " (residual " << norm << ")";
        throw NoConvergence(msg.str(), it + 1);
      }
    }
    if (shifted && !(n_trial < norm)) {
      throw SingularJacobian("Jacobian is singular at iteration " + std::to_string(it) +
                             " and the shifted step does not reduce the residual");
    }
    const bool negligible = dx.norm() <= 1e-13 * y.norm() || dx.norm() == 0.0;
    y = trial;
    r = r_trial;
    norm = n_trial;
    if (!std::isfinite(norm)) throw NoConvergence("residual became non-finite", it + 1);
    // A negligible full step means the iterate sits at the rounding floor of the residual.
    if (negligible) {
      ++it;
      return finish();
    }
  }
  if (norm <= target) return finish();
  std::ostringstream msg;
  msg << "Newton did not converge in " << cfg.max_iter << " iterations (residual " << norm << ", target " << target
      << ")";
  throw NoConvergence(msg.str(), it);
}

}  // namespace dissect
