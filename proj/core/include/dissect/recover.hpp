#pragma once

#include "dissect/decouple.hpp"
#include "dissect/newton.hpp"
#include "dissect/netlist.hpp"

#include <string>
#include <vector>

namespace dissect {

/// Solves Kbar_P xt + Kbar_Q xb + fbar(t) = 0 for xb. `guess` defaults to zero.
Vector recover_index1(const DecouplingL1& d, const Vector& xt, double t, const Vector& p, const NewtonConfig& cfg = {},
                      const Vector& guess = {}, NewtonStats* stats = nullptr);

/// Solves the xtp equation for given xtq; the remaining parts of `context`
/// only fill the state at which the operators are evaluated.
Vector solve_xtp(const DecouplingL2& d, const Level2Parts& context, double t, const Vector& p,
                 const NewtonConfig& cfg = {}, NewtonStats* stats = nullptr);

/// Jointly solves the xbp and xbq equations for given xtq, xtp and xtp'.
/// Returns `context` with xbp and xbq replaced.
Level2Parts solve_xb_joint(const DecouplingL2& d, const Level2Parts& context, const Vector& xtp_dot, double t,
                           const Vector& p, const NewtonConfig& cfg = {}, NewtonStats* stats = nullptr);

struct Index2Recovery {
  Level2Parts parts;  // at time t
  Vector xtp_dot;     // backward-difference estimate
  double dt = 0.0;
  int iterations = 0;
};

/// Index-2 reconstruction from xtq(t) and xtq(t + dt): xtp at both times,
/// its derivative by a difference quotient, then xbp and xbq jointly.
Index2Recovery recover_index2(const DecouplingL2& d, const Vector& xtq_now, const Vector& xtq_next, double t,
                              double dt, const Vector& p, const NewtonConfig& cfg = {},
                              const Level2Parts* guess = nullptr);

Vector recombine(const DecouplingL1& d, const Vector& xt, const Vector& xb);
Vector recombine(const DecouplingL2& d, const Level2Parts& parts);

/// 2-norm of the algebraic residual Wᵀ(Kx + f) at a full state.
double consistency_error(const DecouplingL1& d, const Vector& x, double t, const Vector& p);
/// 2-norm of the stacked xtp, xbp and xbq equations.
double consistency_error(const DecouplingL2& d, const Level2Parts& parts, const Vector& xtp_dot, double t,
                         const Vector& p);

struct ConsistencyReport {
  std::vector<double> times;
  std::vector<double> learned;        // all variables taken from independent predictions
  std::vector<double> reconstructed;  // algebraic variables recovered from the differential ones
};

/// A probe is a (time, differential coordinates, their rate) triple.
struct Probe {
  double t = 0.0;
  Vector differential;
  Vector rate;
  Vector state;  // full state near the probe, used as the recovery guess; may be empty
};

std::vector<Probe> default_probes(Index dim, double t_end, std::size_t count, std::uint64_t seed = 11);

/// Parameters whose variation over their range leaves the reduced-ODE
/// residual unchanged (relative 1e-12) at every probe. Probes where the
/// algebraic recovery fails are skipped; with none usable nothing is reported.
std::vector<std::string> ae_only_parameters(const DecouplingL1& d, const std::vector<ParameterRange>& space,
                                            const std::vector<Probe>& probes, const NewtonConfig& cfg = {});
std::vector<std::string> ae_only_parameters(const DecouplingL2& d, const std::vector<ParameterRange>& space,
                                            const std::vector<Probe>& probes, const NewtonConfig& cfg = {});

}  // namespace dissect
