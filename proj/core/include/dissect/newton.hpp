#pragma once

#include "dissect/types.hpp"

#include <functional>

namespace dissect {

enum class Damping { None, LineSearchHalving };

struct NewtonConfig {
  double abs_tol = 1e-12;
  double rel_tol = 1e-10;
  int max_iter = 50;
  Damping damping = Damping::LineSearchHalving;
  bool analytic_jacobian = true;  // false: central differences even when a Jacobian is supplied
  double fd_step = 1e-7;          // relative step for finite differences
  // Diagonal shift tried when the Jacobian is singular (0 disables). The
  // residual is untouched, so a converged result still solves the system.
  double singular_shift = 1e-12;

  void validate() const;
};

struct NewtonStats {
  int iterations = 0;
  double residual_norm = 0.0;
};

using ResidualFn = std::function<Vector(const Vector&)>;
using JacobianFn = std::function<Matrix(const Vector&)>;

Matrix finite_difference_jacobian(const ResidualFn& residual, const Vector& y, double rel_step = 1e-7);

/// Damped Newton iteration. Converges when the residual norm drops to
/// abs_tol + rel_tol * |residual(guess)|, or when a full step becomes
/// negligible relative to the iterate. Throws NoConvergence, or
/// SingularJacobian when the Jacobian is singular and the shifted step
/// does not reduce the residual.
Vector newton_solve(const ResidualFn& residual, const JacobianFn& jacobian, const Vector& guess,
                    const NewtonConfig& cfg = {}, NewtonStats* stats = nullptr);

}  // namespace dissect
