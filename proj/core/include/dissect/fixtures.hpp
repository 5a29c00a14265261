#pragma once

#include "dissect/netlist.hpp"

#include <string>
#include <vector>

namespace dissect {

/// Names of the built-in circuits: "oscillator-v", "oscillator-i", "rectifier".
std::vector<std::string> fixture_names();

/// Netlist text of a built-in circuit; throws ValidationError("unknown-fixture").
std::string fixture_text(const std::string& name);

CircuitGraph load_fixture(const std::string& name);

/// Constants that reproduce one of the three numerical experiments.
struct ExperimentPreset {
  std::string name;     // osc1, osc2, rectifier
  std::string fixture;
  double t_end = 0.0;   // s
  double step = 0.0;    // integration step, s
  double tolerance = 0.0;
  std::vector<std::string> learned;     // differential variables
  std::vector<std::string> comparison;  // algebraic variables also learned directly
  Vector probe;         // parameter point used for plots
};

std::vector<std::string> experiment_names();
ExperimentPreset experiment_preset(const std::string& name);

}  // namespace dissect
