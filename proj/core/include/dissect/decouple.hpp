#pragma once

#include "dissect/basis.hpp"
#include "dissect/mna.hpp"
#include "dissect/topology.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dissect {

struct DecoupleOptions {
  Vector reference_state;       // empty: zero state
  Vector reference_parameters;  // empty: midpoint of the parameter ranges
  bool topological = true;      // use incidence-based bases when the system has a circuit
  double rank_tol = 1e-10;
  double kernel_tol = 1e-9;     // kernel-constancy check at the sample states
  std::vector<std::pair<Vector, Vector>> samples;  // (x, p); empty: built-in random set
};

/// Deterministic sample states and parameter points for a system.
std::vector<std::pair<Vector, Vector>> default_samples(const DaeSystem& system, std::size_t count,
                                                       std::uint64_t seed = 7);

/// Readable name of the coordinate that a row functional extracts from the
/// state: a layout name, "v_<a>_<b>" for a potential difference, or `fallback`.
std::string functional_name(const Vector& row, const StateLayout& layout, const std::string& fallback);

/// First splitting step: x = P xt + Q xb with constant bases of M and Mᵀ.
class DecouplingL1 {
 public:
  DaeSystem system;
  Basis right;  // complement P, kernel Q of M
  Basis left;   // complement V, kernel W of Mᵀ
  Splitter splitter;
  Vector reference_state;
  Vector reference_parameters;
  std::vector<std::string> differential_names;
  std::vector<std::string> algebraic_names;
  Matrix differential_map;  // rows: functionals giving xt from x
  Matrix algebraic_map;     // rows: functionals giving xb from x
  bool topological = false;

  Index differential_size() const { return right.complement.cols(); }
  Index algebraic_size() const { return right.kernel.cols(); }
  const Matrix& P() const { return right.complement; }
  const Matrix& Q() const { return right.kernel; }
  const Matrix& V() const { return left.complement; }
  const Matrix& W() const { return left.kernel; }

  Vector state(const Vector& xt, const Vector& xb) const { return splitter.combine(xt, xb); }
  SplitCoordinates split(const Vector& x) const { return splitter.split(x); }

  Matrix mass_tilde(const Vector& x, const Vector& p) const;
  Matrix k_tilde_p(const Vector& x, const Vector& p) const;
  Matrix k_tilde_q(const Vector& x, const Vector& p) const;
  Matrix k_bar_p(const Vector& x, const Vector& p) const;
  Matrix k_bar_q(const Vector& x, const Vector& p) const;
  Vector f_tilde(double t, const Vector& p) const;
  Vector f_bar(double t, const Vector& p) const;

  /// Vᵀ(M P xt' + K x + f)
  Vector differential_residual(const Vector& xt_dot, const Vector& xt, const Vector& xb, double t,
                               const Vector& p) const;
  /// Wᵀ(K x + f)
  Vector algebraic_residual(const Vector& xt, const Vector& xb, double t, const Vector& p) const;
  /// Jacobian of algebraic_residual with respect to xb.
  Matrix algebraic_jacobian(const Vector& xt, const Vector& xb, const Vector& p) const;
};

DecouplingL1 decouple_level1(const DaeSystem& system, const DecoupleOptions& options = {});

/// Coordinates of the second splitting step.
struct Level2Parts {
  Vector xtq;  // differential
  Vector xtp;
  Vector xbp;
  Vector xbq;
};

/// Second splitting step: xb = Pbar xbp + Qbar xbq and xt = Ptil xtp + Qtil xtq.
class DecouplingL2 {
 public:
  DecouplingL1 level1;
  Basis bar;         // complement Pbar, kernel Qbar of Kbar_Q
  Basis bar_left;    // complement Vbar, kernel Wbar of Kbar_Qᵀ
  Basis tilde;       // complement Ptil, kernel Qtil of Wbarᵀ Kbar_P
  Basis tilde_left;  // complement Vtil, kernel Wtil of (Mtil Qtil)ᵀ at the reference state
  Splitter bar_split;
  Splitter tilde_split;
  std::vector<std::string> xtq_names, xtp_names, xbp_names, xbq_names;
  Matrix xtq_map, xtp_map, xbp_map, xbq_map;  // rows: functionals of x

  Index dim_xtq() const { return tilde.kernel.cols(); }
  Index dim_xtp() const { return tilde.complement.cols(); }
  Index dim_xbp() const { return bar.complement.cols(); }
  Index dim_xbq() const { return bar.kernel.cols(); }

  Vector state(const Level2Parts& parts) const;
  Level2Parts split(const Vector& x) const;
  Vector xt(const Level2Parts& parts) const;
  Vector xb(const Level2Parts& parts) const;

  /// Left kernel of Mtil(x) Qtil, obtained by projecting the reference
  /// kernel along the constant complement Vtil.
  Matrix w_tilde(const Vector& x, const Vector& p) const;

  /// Wbarᵀ Wᵀ(Kx + f): determines xtp.
  Vector eq_xtp(const Level2Parts& parts, double t, const Vector& p) const;
  /// Vbarᵀ Wᵀ(Kx + f): determines xbp.
  Vector eq_xbp(const Level2Parts& parts, double t, const Vector& p) const;
  /// Wtilᵀ Vᵀ(M P Ptil xtp' + Kx + f): determines xbq.
  Vector eq_xbq(const Level2Parts& parts, const Vector& xtp_dot, double t, const Vector& p) const;
  /// Vtilᵀ Vᵀ(M P (Ptil xtp' + Qtil xtq') + Kx + f): the reduced ODE.
  Vector ode_residual(const Level2Parts& parts, const Vector& xtq_dot, const Vector& xtp_dot, double t,
                      const Vector& p) const;
};

DecouplingL2 decouple_level2(const DecouplingL1& level1, const DecoupleOptions& options = {});

struct VerificationReport {
  bool pass = true;
  std::size_t samples = 0;
  double min_mass_tilde = 0.0;   // sigma_min(Mtil)
  double min_kbar_q = 0.0;       // sigma_min(Kbar_Q), level 1
  double min_vmq = 0.0;          // sigma_min(Vtilᵀ Mtil Qtil), level 2
  double min_wkq = 0.0;          // sigma_min(Wtilᵀ Ktil_Q Qbar), level 2
  double min_wkp = 0.0;          // sigma_min(Wbarᵀ Kbar_P Ptil), level 2
  double max_kernel_residual = 0.0;
  std::vector<std::string> diagnostics;
};

VerificationReport verify_decoupling(const DecouplingL1& d, const std::vector<std::pair<Vector, Vector>>& samples,
                                     double tol = 1e-10);
VerificationReport verify_decoupling(const DecouplingL2& d, const std::vector<std::pair<Vector, Vector>>& samples,
                                     double tol = 1e-10);

/// Numeric index (1 or 2) from the regularity of Kbar_Q and, for index 2,
/// of Wtilᵀ Ktil_Q Qbar. Throws IndexTooHigh beyond 2.
int detect_index_numeric(const DaeSystem& system, const DecoupleOptions& options = {});

/// Topological report completed with the numeric index and regularity figures.
IndexReport detect_index(const CircuitGraph& graph, const DecoupleOptions& options = {});

}  // namespace dissect
