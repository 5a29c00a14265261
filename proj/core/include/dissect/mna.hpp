#pragma once

#include "dissect/netlist.hpp"
#include "dissect/types.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dissect {

/// Reduced incidence matrices (ground row removed), one column per branch
/// of each class. A two-port contributes two columns to `inductive`.
struct IncidenceSet {
  Matrix capacitive;
  Matrix resistive;  // resistors and diodes
  Matrix inductive;
  Matrix vsource;
  Matrix isource;

  // Column -> index into CircuitGraph::branches.
  std::vector<std::size_t> capacitor_branch;
  std::vector<std::size_t> resistor_branch;
  std::vector<std::size_t> inductor_branch;
  std::vector<int> inductor_winding;  // 0 for plain inductors, 0/1 for two-port windings
  std::vector<std::size_t> vsource_branch;
  std::vector<std::size_t> isource_branch;

  Index nodes() const { return capacitive.rows(); }
};

IncidenceSet build_incidence(const CircuitGraph& graph);

/// Unknowns ordered as potentials, inductor currents, source currents.
struct StateLayout {
  std::size_t potentials = 0;
  std::size_t inductor_currents = 0;
  std::size_t source_currents = 0;
  std::vector<std::string> names;

  std::size_t size() const { return potentials + inductor_currents + source_currents; }
  std::size_t inductor_begin() const { return potentials; }
  std::size_t source_begin() const { return potentials + inductor_currents; }
  std::optional<std::size_t> index_of(const std::string& name) const;

  /// Generic layout with names x1..xn, for systems not built from a netlist.
  static StateLayout generic(std::size_t n);
};

struct DeviceEval {
  Vector value;
  Matrix jacobian;
  bool clamped = false;  // diode exponent left the safe range
};

/// Device function and its Jacobian. `arg` is the branch voltage for
/// resistive and capacitive devices and the branch current vector for
/// inductive ones. For diodes the value is the conductance-form function
/// g_D that the stiffness matrix stamps, so the branch current is g_D(v)*v.
DeviceEval eval_device(const DeviceModel& device, const Vector& arg, const Vector& p);

/// DAE in the form M(x,p) x' + K(x,p) x + f(t,p) = 0.
///
/// `stiffness_tangent` is the Jacobian of x -> K(x)x and
/// `mass_action` the Jacobian of x -> M(x)v for fixed v; both default to
/// K and 0 when left empty.
struct DaeSystem {
  StateLayout layout;
  std::size_t parameter_count = 0;
  std::function<Matrix(const Vector& x, const Vector& p)> mass;
  std::function<Matrix(const Vector& x, const Vector& p)> stiffness;
  std::function<Vector(double t, const Vector& p)> source;
  std::function<Matrix(const Vector& x, const Vector& p)> stiffness_tangent;
  std::function<Matrix(const Vector& x, const Vector& v, const Vector& p)> mass_action;
  std::function<Vector(double t, const Vector& p)> source_rate;

  // Set for systems assembled from a netlist.
  std::shared_ptr<const CircuitGraph> circuit;
  std::shared_ptr<const IncidenceSet> incidence;

  std::size_t size() const { return layout.size(); }
  Vector residual(const Vector& xdot, const Vector& x, double t, const Vector& p) const;
  Matrix tangent(const Vector& x, const Vector& p) const;
  Matrix mass_jacobian(const Vector& x, const Vector& v, const Vector& p) const;
};

DaeSystem build_dae(const CircuitGraph& graph);

struct Assembled {
  Matrix mass;
  Matrix stiffness;
  Vector source;
};

/// Evaluates the three operators; throws NonFiniteError naming the device
/// that produced a non-finite entry.
Assembled assemble(const DaeSystem& system, const Vector& x, double t, const Vector& p);

}  // namespace dissect
