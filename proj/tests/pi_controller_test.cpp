#include <gtest/gtest.h>

#include "evcharge/pi_controller.hpp"
#include "evcharge/simworld.hpp"

using namespace evcharge;

TEST(PiForceZ, AtSetpointCommandsNothing) {
  PiState s;
  EXPECT_EQ(pi_force_z(10.0, PiGains{}, 0.01, s), 0.0);
  EXPECT_EQ(s.integral, 0.0);
}

TEST(PiForceZ, ProportionalFormula) {
  PiState s;
  PiGains g;
  g.k_p = 1e-4;
  g.k_i = 0.0;
  EXPECT_NEAR(pi_force_z(0.0, g, 0.01, s), 1e-5, 1e-20);
  EXPECT_NEAR(pi_force_z(20.0, g, 0.01, s), -1e-5, 1e-20);
}

TEST(PiForceZ, IntegralAccumulatesAndClamps) {
  PiGains g;
  g.k_p = 0.0;
  g.k_i = 1.0;
  g.clamp = 0.5;
  PiState s;
  double dz = 0.0;
  for (int i = 0; i < 3; ++i) dz = pi_force_z(0.0, g, 0.01, s);
  EXPECT_NEAR(s.integral, 0.3, 1e-12);
  EXPECT_NEAR(dz, 0.3, 1e-12);
  for (int i = 0; i < 1000; ++i) pi_force_z(0.0, g, 0.01, s);
  EXPECT_EQ(s.integral, 0.5);
  for (int i = 0; i < 1000; ++i) pi_force_z(1000.0, g, 0.01, s);
  EXPECT_EQ(s.integral, -0.5);
}

TEST(PiForceZ, ZeroGainsNeverMove) {
  PiGains g;
  g.k_p = 0.0;
  g.k_i = 0.0;
  PiState s;
  for (double f : {0.0, 5.0, 50.0, -3.0}) EXPECT_EQ(pi_force_z(f, g, 0.01, s), 0.0);
}

TEST(PiForceZ, RejectsBadInput) {
  PiState s;
  EXPECT_THROW(pi_force_z(0.0, PiGains{}, 0.0, s), Error);
  PiGains g;
  g.k_p = -1.0;
  EXPECT_THROW(g.validate(), Error);
}

// Pressing on flat surface away from the hole: the contact plant is the
// penalty model, integrated tick by tick.
TEST(PiForceZ, StepResponseSettlesWithinTwoSeconds) {
  const HoleGeometry hole(HoleShape::kCircle, 0.01);
  const ContactParams cp;
  const PiGains g;
  const double dt = 0.01;
  const Vec2 offset(0.02, 0.0);
  double height = 0.0005, velocity = 0.0;
  PiState s;
  std::vector<double> fz;
  for (int i = 0; i < 1000; ++i) {
    const Wrench w = ft_reading(hole, cp, 0.00975, offset, height, velocity);
    fz.push_back(w.force.z());
    const double dz = pi_force_z(w.force.z(), g, dt, s);
    velocity = -dz / dt;
    height -= dz;
  }
  int settled = -1;
  for (int i = 0; i < static_cast<int>(fz.size()); ++i) {
    bool ok = true;
    for (int j = i; j < static_cast<int>(fz.size()); ++j) ok = ok && std::abs(fz[j] - 10.0) <= 1.0;
    if (ok) {
      settled = i;
      break;
    }
  }
  ASSERT_GE(settled, 0);
  EXPECT_LE(settled * dt, 2.0);
  for (std::size_t j = static_cast<std::size_t>(settled); j < fz.size(); ++j) EXPECT_LE(std::abs(fz[j] - 10.0), 3.0);
  EXPECT_NEAR(fz.back(), 10.0, 1e-3);
}
