#pragma once

#include <algorithm>
#include <cmath>

#include "evcharge/error.hpp"

namespace evcharge {

struct PiGains {
  double k_p = 2e-3;       // m/(s·N)
  double k_i = 5e-5;       // m/(N·s) applied to the accumulated error
  double clamp = 100.0;    // N·s
  double setpoint = 10.0;  // N

  void validate() const {
    require(k_p >= 0.0 && k_i >= 0.0, ErrorKind::kConfig, "PI gains must be non-negative");
    require(clamp > 0.0, ErrorKind::kConfig, "PI integral clamp must be positive");
  }
};

struct PiState {
  double integral = 0.0;  // N·s
};

/// Vertical displacement command (positive = press further) regulating f_z
/// to the setpoint: dz = k_p·e·dt + k_i·∫e, with the integral clamped.
inline double pi_force_z(double f_z, const PiGains& gains, double dt, PiState& state) {
  require(dt > 0.0, ErrorKind::kInvalidArgument, "dt must be positive");
  const double e = gains.setpoint - f_z;
  state.integral = std::clamp(state.integral + e * dt, -gains.clamp, gains.clamp);
  return gains.k_p * e * dt + gains.k_i * state.integral;
}

}  // namespace evcharge
