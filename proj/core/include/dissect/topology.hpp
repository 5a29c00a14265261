#pragma once

#include "dissect/basis.hpp"
#include "dissect/mna.hpp"
#include "dissect/netlist.hpp"

#include <string>
#include <vector>

namespace dissect {

/// Bases built from incidence matrices alone. In the (phi, i_L, i_V)
/// layout the mass kernel is blkdiag(q_c, [0; I]) and the second-level
/// kernel of Wᵀ K Q is blkdiag(q_v * q_r, w_v).
struct TopologicalBases {
  Matrix q_c;  // im = ker A_Cᵀ
  Matrix p_c;
  Matrix q_v;  // im = ker A_Vᵀ q_c
  Matrix q_r;  // im = ker A_Rᵀ q_c q_v
  Matrix w_v;  // im = ker q_cᵀ A_V
  Basis first;
  Basis second;
  bool fallback = false;  // a candidate failed its kernel identity
  std::string note;
};

TopologicalBases topological_bases(const IncidenceSet& inc);

struct IndexReport {
  int topological_index = 1;
  std::vector<std::vector<std::string>> cv_loops;
  std::vector<std::vector<std::string>> li_cutsets;
  int numeric_index = 0;  // 0 until computed
  double kbar_q_min_singular = 0.0;
  double kbar_q_condition = 0.0;
  double index2_min_singular = 0.0;  // of Wtildeᵀ Ktilde_Q Qbar, index 2 only
};

/// Loops of capacitors and voltage sources containing a voltage source and
/// cutsets of inductors and current sources decide between index 1 and 2.
IndexReport detect_index_topological(const CircuitGraph& graph);

}  // namespace dissect
