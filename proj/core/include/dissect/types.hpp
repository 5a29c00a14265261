#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace dissect {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Physical constants (SI, exact since the 2019 redefinition).
inline constexpr double kElementaryCharge = 1.602176634e-19;
inline constexpr double kBoltzmann = 1.380649e-23;
inline constexpr double kZeroCelsius = 273.15;

inline double celsius_to_kelvin(double c) { return c + kZeroCelsius; }
inline double thermal_voltage(double kelvin) { return kBoltzmann * kelvin / kElementaryCharge; }

}  // namespace dissect
