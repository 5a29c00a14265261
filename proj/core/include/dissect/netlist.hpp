#pragma once

#include "dissect/types.hpp"
#include "dissect/waveform.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dissect {

enum class DeviceKind { Resistor, Diode, Capacitor, Inductor, InductiveMultiport, VoltageSource, CurrentSource };

std::string to_string(DeviceKind kind);

/// A device model with fixed parameter values and optional bindings of some
/// of those values to entries of the design-parameter vector `p`.
///
/// Keys are upper case: R, C, L for linear elements; IS, VT (and TEMP, T0,
/// EG for the temperature-dependent diode); L0, A2, A4, RATIO2, COUP2 for
/// the two-port transformer. TEMP is in degrees Celsius, T0 in kelvin.
struct DeviceModel {
  DeviceKind kind = DeviceKind::Resistor;
  std::map<std::string, double> params;
  std::map<std::string, std::size_t> bindings;  // key -> index into p
  Waveform waveform;                            // sources only

  /// Value of `key`, taken from `p` when bound.
  double get(const std::string& key, const Vector& p) const;
  bool has(const std::string& key) const { return params.count(key) || bindings.count(key); }

  /// Diode with the temperature-dependent saturation current.
  bool thermal() const { return kind == DeviceKind::Diode && has("TEMP"); }

  bool operator==(const DeviceModel&) const = default;
};

struct Branch {
  std::string name;
  std::vector<std::size_t> terminals;  // node indices, 0 is ground; 4 for a two-port
  DeviceModel device;

  bool operator==(const Branch&) const = default;
};

struct ParameterRange {
  std::string name;
  double lower = 0.0;
  double upper = 0.0;

  bool operator==(const ParameterRange&) const = default;
};

/// Validated circuit. Node 0 is the ground node "0"; potentials of the
/// remaining nodes are the unknowns.
struct CircuitGraph {
  std::vector<std::string> nodes;
  std::vector<Branch> branches;
  std::vector<ParameterRange> parameter_space;

  std::size_t unknown_potentials() const { return nodes.empty() ? 0 : nodes.size() - 1; }
  std::optional<std::size_t> parameter_index(std::string_view name) const;
  std::vector<std::string> parameter_names() const;
  /// Midpoint of every parameter range.
  Vector nominal_parameters() const;
  std::size_t count(DeviceKind kind) const;

  bool operator==(const CircuitGraph&) const = default;
};

/// Parses the line-oriented netlist format (see README) and validates it.
CircuitGraph parse_netlist(std::string_view text);
CircuitGraph load_netlist_file(const std::string& path);

/// Checks the structural invariants; throws ValidationError.
void validate(const CircuitGraph& graph);

/// Serializes to netlist text; `parse_netlist(to_netlist(g)) == g`.
std::string to_netlist(const CircuitGraph& graph);

}  // namespace dissect
