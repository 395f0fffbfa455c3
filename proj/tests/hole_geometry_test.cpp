#include <gtest/gtest.h>

#include <random>

#include "evcharge/hole_geometry.hpp"

using namespace evcharge;

namespace {

// Brute-force max of the SDF over a disc on a square grid.
DiscExtreme grid_max(const HoleGeometry& h, const Vec2& c, double r, double step) {
  DiscExtreme best{-1e300, c};
  const int n = static_cast<int>(std::ceil(r / step));
  for (int i = -n; i <= n; ++i)
    for (int j = -n; j <= n; ++j) {
      const Vec2 d(i * step, j * step);
      if (d.norm() > r) continue;
      const double v = h.sdf(c + d);
      if (v > best.value) best = DiscExtreme{v, c + d};
    }
  return best;
}

}  // namespace

TEST(HoleShape, NamesRoundTrip) {
  for (HoleShape s : kAllHoleShapes) EXPECT_EQ(hole_shape_from_string(to_string(s)), s);
  EXPECT_THROW(hole_shape_from_string("oval"), Error);
}

TEST(HoleGeometry, InradiusIsCentreDepth) {
  for (HoleShape s : kAllHoleShapes) {
    const HoleGeometry h(s, 0.01);
    EXPECT_NEAR(h.sdf(Vec2::Zero()), -0.01, 1e-12) << to_string(s);
  }
}

TEST(HoleGeometry, SignConvention) {
  for (HoleShape s : kAllHoleShapes) {
    const HoleGeometry h(s, 0.01);
    EXPECT_LT(h.sdf(Vec2(0.001, 0.0005)), 0.0) << to_string(s);
    EXPECT_GT(h.sdf(Vec2(0.05, 0.04)), 0.0) << to_string(s);
  }
}

TEST(HoleGeometry, KnownDistances) {
  EXPECT_NEAR(HoleGeometry(HoleShape::kCircle, 0.01).sdf(Vec2(0.03, 0.04)), 0.04, 1e-15);
  EXPECT_NEAR(HoleGeometry(HoleShape::kSquare, 0.01).sdf(Vec2(0.013, 0.014)), 0.005, 1e-15);
  EXPECT_NEAR(HoleGeometry(HoleShape::kSquare, 0.01).sdf(Vec2(0.02, 0.0)), 0.01, 1e-15);
  EXPECT_NEAR(HoleGeometry(HoleShape::kSlot, 0.01).sdf(Vec2(0.015, 0.0)), -0.005, 1e-15);
  EXPECT_NEAR(HoleGeometry(HoleShape::kSlot, 0.01).sdf(Vec2(0.0, 0.015)), 0.005, 1e-15);
  // hexagon flat sides face ±y with phase 0 vertices on ±x
  EXPECT_NEAR(HoleGeometry(HoleShape::kHexagon, 0.01).sdf(Vec2(0.0, 0.012)), 0.002, 1e-12);
  // cross arm tip along +x at 3r, half-width r/√2
  EXPECT_NEAR(HoleGeometry(HoleShape::kCross, 0.01).sdf(Vec2(0.035, 0.0)), 0.005, 1e-12);
}

TEST(HoleGeometry, SdfIsOneLipschitz) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-0.04, 0.04);
  for (HoleShape s : kAllHoleShapes) {
    const HoleGeometry h(s, 0.01);
    for (int i = 0; i < 2000; ++i) {
      const Vec2 a(u(rng), u(rng)), b(u(rng), u(rng));
      EXPECT_LE(std::abs(h.sdf(a) - h.sdf(b)), (a - b).norm() + 1e-12) << to_string(s);
    }
  }
}

TEST(HoleGeometry, GradientIsUnitAndOutward) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-0.03, 0.03);
  for (HoleShape s : kAllHoleShapes) {
    const HoleGeometry h(s, 0.01);
    for (int i = 0; i < 200; ++i) {
      const Vec2 p(u(rng), u(rng));
      const Vec2 g = h.gradient(p);
      EXPECT_NEAR(g.norm(), 1.0, 1e-9);
      // a small step along the gradient raises the SDF at most by the step
      EXPECT_GE(h.sdf(p + 1e-5 * g), h.sdf(p) - 1e-12);
    }
  }
}

TEST(DiscSdfMax, MatchesGridOracle) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-0.006, 0.006);
  for (HoleShape s : kAllHoleShapes) {
    const HoleGeometry h(s, 0.01);
    for (int i = 0; i < 30; ++i) {
      const Vec2 c(u(rng), u(rng));
      const double r = 0.00975;
      const DiscExtreme fast = disc_sdf_max(h, c, r);
      const DiscExtreme slow = grid_max(h, c, r, 1e-4);
      // the grid point nearest the true boundary max lies within one cell diagonal
      EXPECT_GE(fast.value, slow.value - 1e-9) << to_string(s);
      EXPECT_LE(fast.value, slow.value + 1.5e-4) << to_string(s);
      EXPECT_NEAR((fast.point - c).norm(), r, 1e-12);
      EXPECT_NEAR(h.sdf(fast.point), fast.value, 1e-15);
    }
  }
}

TEST(DiscSdfMax, CentredPegFitsEveryShape) {
  for (HoleShape s : kAllHoleShapes) {
    const HoleGeometry h(s, 0.01);
    EXPECT_LE(disc_sdf_max(h, Vec2::Zero(), 0.00975).value, 0.0) << to_string(s);
    EXPECT_GT(disc_sdf_max(h, Vec2(0.001, 0.001), 0.00975).value, 0.0) << to_string(s);
  }
}

TEST(RimContact, MomentMatchesAreaIntegral) {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> u(-0.005, 0.005);
  for (HoleShape s : kAllHoleShapes) {
    const HoleGeometry h(s, 0.01);
    for (int k = 0; k < 5; ++k) {
      const Vec2 c(u(rng), u(rng));
      const double r = 0.00975;
      const RimContact rc = rim_contact(h, c, r, 2048);
      const double g = 5e-5;
      Vec2 area = Vec2::Zero();
      const int n = static_cast<int>(r / g) + 1;
      for (int i = -n; i <= n; ++i)
        for (int j = -n; j <= n; ++j) {
          const Vec2 p = c + Vec2(i * g, j * g);
          if ((p - c).norm() > r || h.sdf(p) <= 0.0) continue;
          area += h.gradient(p) * g * g;
        }
      // cells straddling the contact boundary: about one cell along a radius
      EXPECT_NEAR((rc.moment - area).norm(), 0.0, 0.01 * area.norm() + g * r) << to_string(s);
    }
  }
}

TEST(RimContact, SymmetricRingCancels) {
  const HoleGeometry h(HoleShape::kCircle, 0.01);
  const RimContact rc = rim_contact(h, Vec2::Zero(), 0.0102);
  EXPECT_NEAR(rc.moment.norm(), 0.0, 1e-15);
  EXPECT_NEAR(rc.weight, 2 * kPi * 0.0102 * 0.0002, 1e-12);
  EXPECT_EQ(rim_contact(h, Vec2::Zero(), 0.009).weight, 0.0);
}

TEST(HoleGeometry, RejectsBadDimensions) {
  EXPECT_THROW(HoleGeometry(HoleShape::kCircle, 0.0), Error);
  EXPECT_THROW(HoleGeometry(HoleShape::kCircle, 0.01, -1.0), Error);
  EXPECT_THROW(HoleGeometry(HoleShape::kCircle, 0.01, 0.02, -0.001), Error);
}
