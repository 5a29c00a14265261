#pragma once

#include "dissect/decouple.hpp"
#include "dissect/errors.hpp"
#include "dissect/mna.hpp"
#include "dissect/newton.hpp"

#include <string>
#include <vector>

namespace dissect {

enum class Method { ImplicitEuler, Trapezoidal };

std::string to_string(Method m);

struct Trajectory {
  std::vector<double> times;
  Matrix states;  // one row per time point
  Vector parameters;
  std::vector<std::string> names;
  std::string method;
  double step = 0.0;
  long newton_iterations = 0;
  int max_newton_iterations = 0;
  int subdivided_steps = 0;  // grid steps that needed internal substeps

  std::size_t size() const { return times.size(); }
  /// Linear interpolation between grid points; clamps outside the grid.
  Vector at(double t) const;
  Vector column(const std::string& name) const;
};

/// Thrown when a step fails; carries the trajectory up to the last accepted point.
class StepFailure : public NoConvergence {
 public:
  StepFailure(const std::string& message, int iterations, Trajectory partial)
      : NoConvergence(message, iterations), partial_(std::move(partial)) {}
  const Trajectory& partial() const noexcept { return partial_; }

 private:
  Trajectory partial_;
};

/// t0, t0 + h, ... up to and including the last point not beyond t_end (within rounding).
std::vector<double> uniform_grid(double t0, double t_end, double step);

/// Makes `guess` consistent at t0: algebraic coordinates are solved while the
/// differential ones are kept.
Vector consistent_initial(const DaeSystem& system, const Vector& guess, double t0, const Vector& p,
                          const NewtonConfig& cfg = {});
Vector consistent_initial(const DecouplingL1& d, const Vector& guess, double t0, const Vector& p,
                          const NewtonConfig& cfg = {});
/// Index 2: xtp, xbp and xbq are solved; the rate of xtp, which the
/// constraint fixes as a function of t, is taken by central differences.
Vector consistent_initial(const DecouplingL2& d, const Vector& guess, double t0, const Vector& p,
                          const NewtonConfig& cfg = {});

Trajectory integrate_dae(const DaeSystem& system, const Vector& x0, const std::vector<double>& grid, const Vector& p,
                         const NewtonConfig& cfg = {}, Method method = Method::ImplicitEuler);

/// Implicit Euler on the reduced ODE with the algebraic coordinates solved
/// in the same Newton system at every step. Returns xt (level 1) or xtq (level 2).
Trajectory integrate_reduced_ode(const DecouplingL1& d, const Vector& y0, const std::vector<double>& grid,
                                 const Vector& p, const NewtonConfig& cfg = {});
/// xtp at the first point is solved from y0 = xtq(grid[0]).
Trajectory integrate_reduced_ode(const DecouplingL2& d, const Vector& y0, const std::vector<double>& grid,
                                 const Vector& p, const NewtonConfig& cfg = {});

}  // namespace dissect
