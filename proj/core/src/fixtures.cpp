#include "dissect/fixtures.hpp"

#include "dissect/errors.hpp"

namespace dissect {

namespace {

constexpr const char* kOscillatorV = R"(# diode oscillator driven by a voltage source
PARAM L 1e-3 3e-3
PARAM C 100e-9 300e-9
V1 1 0 SIN(0 1 300)
R1 1 2 500
L1 2 3 param=L
C1 3 0 param=C
D1 3 0 IS=1e-14 VT=0.026
)";

constexpr const char* kOscillatorI = R"(# diode oscillator driven by a current source
PARAM L 1e-3 3e-3
PARAM C 100e-9 300e-9
I1 0 1 SIN(0 1e-4 200)
R1 1 2 500
L1 2 3 param=L
C1 3 0 param=C
D1 3 0 IS=1e-14 VT=0.026
)";

// Full-wave bridge fed through a nonlinear transformer. Outer diodes D1, D4
// share temperature T1, inner diodes D2, D3 share T2 (degrees Celsius).
constexpr const char* kRectifier = R"(# full-wave rectifier
PARAM T1 20 90
PARAM T2 20 90
I1 0 1 COS(0 0.1 50)
K1 1 0 2 0 L0=1 A2=-10 A4=50 RATIO2=0.1 COUP2=0.09
D1 2 3 IS=1e-14 TEMP=T1
D2 4 2 IS=1e-14 TEMP=T2
D3 0 3 IS=1e-14 TEMP=T2
D4 4 0 IS=1e-14 TEMP=T1
C1 3 4 1e-3
R1 3 4 50
)";

}  // namespace

std::vector<std::string> fixture_names() { return {"oscillator-v", "oscillator-i", "rectifier"}; }

std::string fixture_text(const std::string& name) {
  if (name == "oscillator-v") return kOscillatorV;
  if (name == "oscillator-i") return kOscillatorI;
  if (name == "rectifier") return kRectifier;
  throw ValidationError("unknown-fixture", "unknown fixture '" + name + "'");
}

CircuitGraph load_fixture(const std::string& name) { return parse_netlist(fixture_text(name)); }

std::vector<std::string> experiment_names() { return {"osc1", "osc2", "rectifier"}; }

ExperimentPreset experiment_preset(const std::string& name) {
  ExperimentPreset e;
  e.name = name;
  if (name == "osc1") {
    e.fixture = "oscillator-v";
    e.t_end = 10e-3;
    e.step = 1e-6;
    e.tolerance = 1e-3;
    e.learned = {"phi3", "i_L1"};
    e.comparison = {"phi2"};
    e.probe = Vector{{1.7e-3, 220e-9}};
  } else if (name == "osc2") {
    e.fixture = "oscillator-i";
    e.t_end = 10e-3;
    e.step = 1e-6;
    e.tolerance = 1e-3;
    e.learned = {"phi3"};
    e.comparison = {"phi2"};
    e.probe = Vector{{1.7e-3, 220e-9}};
  } else if (name == "rectifier") {
    e.fixture = "rectifier";
    e.t_end = 50e-3;
    e.step = 5e-6;
    e.tolerance = 5e-3;
    e.learned = {"v_3_4", "i_K1b"};
    e.probe = Vector{{65.0, 85.0}};
  } else {
    throw ValidationError("unknown-experiment", "unknown experiment '" + name + "'");
  }
  return e;
}

}  // namespace dissect
