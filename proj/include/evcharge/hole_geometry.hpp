#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "evcharge/geometry.hpp"

namespace evcharge {

enum class HoleShape { kCircle, kSquare, kTriangle, kHexagon, kSlot, kCross };

inline constexpr std::array<HoleShape, 6> kAllHoleShapes = {HoleShape::kCircle,  HoleShape::kSquare,
                                                            HoleShape::kTriangle, HoleShape::kHexagon,
                                                            HoleShape::kSlot,    HoleShape::kCross};

inline std::string_view to_string(HoleShape s) {
  switch (s) {
    case HoleShape::kCircle: return "circle";
    case HoleShape::kSquare: return "square";
    case HoleShape::kTriangle: return "triangle";
    case HoleShape::kHexagon: return "hexagon";
    case HoleShape::kSlot: return "slot";
    case HoleShape::kCross: return "cross";
  }
  return "?";
}

inline HoleShape hole_shape_from_string(std::string_view name) {
  for (auto s : kAllHoleShapes)
    if (to_string(s) == name) return s;
  fail(ErrorKind::kConfig, "unknown hole geometry '" + std::string(name) + "'");
}

namespace detail {

// Exact signed distance to a simple polygon (counter-clockwise vertices).
inline double polygon_sdf(const std::vector<Vec2>& v, const Vec2& p) {
  double d = (p - v[0]).squaredNorm();
  bool inside = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    const Vec2 e = v[j] - v[i];
    const Vec2 w = p - v[i];
    const double t = std::clamp(w.dot(e) / e.squaredNorm(), 0.0, 1.0);
    d = std::min(d, (w - e * t).squaredNorm());
    const bool c1 = p.y() >= v[i].y();
    const bool c2 = p.y() < v[j].y();
    const bool c3 = e.x() * w.y() > e.y() * w.x();
    if ((c1 && c2 && c3) || (!c1 && !c2 && !c3)) inside = !inside;
  }
  return inside ? -std::sqrt(d) : std::sqrt(d);
}

inline std::vector<Vec2> regular_polygon(int n, double inradius, double phase) {
  const double circ = inradius / std::cos(kPi / n);
  std::vector<Vec2> v;
  for (int i = 0; i < n; ++i) {
    const double a = phase + 2.0 * kPi * i / n;
    v.emplace_back(circ * std::cos(a), circ * std::sin(a));
  }
  return v;
}

}  // namespace detail

/// Hole cross-section in the port surface. `inradius` is the radius of the
/// largest inscribed circle, so every shape admits the same round peg.
class HoleGeometry {
 public:
  HoleGeometry(HoleShape shape = HoleShape::kCircle, double inradius = 0.01, double depth = 0.02,
               double chamfer = 0.0005)
      : shape_(shape), r_(inradius), depth_(depth), chamfer_(chamfer) {
    require(inradius > 0.0 && depth > 0.0 && chamfer >= 0.0, ErrorKind::kInvalidArgument,
            "hole dimensions must be positive");
    switch (shape) {
      case HoleShape::kTriangle: poly_ = detail::regular_polygon(3, r_, kPi / 2); break;
      case HoleShape::kHexagon: poly_ = detail::regular_polygon(6, r_, 0.0); break;
      case HoleShape::kCross: {
        // arms of half-width r/√2: the inner corners sit at distance r
        const double w = r_ / std::sqrt(2.0);
        const double l = 3.0 * r_;
        poly_ = {{w, -w}, {l, -w}, {l, w}, {w, w}, {w, l}, {-w, l},
                 {-w, w}, {-l, w}, {-l, -w}, {-w, -w}, {-w, -l}, {w, -l}};
        break;
      }
      default: break;
    }
  }

  HoleShape shape() const { return shape_; }
  double inradius() const { return r_; }
  double depth() const { return depth_; }
  double chamfer() const { return chamfer_; }

  /// Negative inside the hole, positive on the surrounding surface.
  double sdf(const Vec2& p) const {
    switch (shape_) {
      case HoleShape::kCircle: return p.norm() - r_;
      case HoleShape::kSquare: {
        const Vec2 d = p.cwiseAbs() - Vec2(r_, r_);
        return d.cwiseMax(0.0).norm() + std::min(std::max(d.x(), d.y()), 0.0);
      }
      case HoleShape::kSlot: {
        // stadium: segment of half-length r along x, thickened by r
        const double x = std::clamp(p.x(), -r_, r_);
        return (p - Vec2(x, 0.0)).norm() - r_;
      }
      case HoleShape::kTriangle:
      case HoleShape::kHexagon:
      case HoleShape::kCross: return detail::polygon_sdf(poly_, p);
    }
    return 0.0;
  }

  /// Unit gradient by central differences.
  Vec2 gradient(const Vec2& p, double h = 1e-7) const {
    const Vec2 g((sdf(p + Vec2(h, 0)) - sdf(p - Vec2(h, 0))) / (2 * h),
                 (sdf(p + Vec2(0, h)) - sdf(p - Vec2(0, h))) / (2 * h));
    const double n = g.norm();
    return n > 1e-12 ? Vec2(g / n) : Vec2(1.0, 0.0);
  }

 private:
  HoleShape shape_;
  double r_;
  double depth_;
  double chamfer_;
  std::vector<Vec2> poly_;
};

struct DiscExtreme {
  double value = 0.0;  // max of the SDF over the disc
  Vec2 point = Vec2::Zero();
};

/// Largest SDF value over a disc of radius r centred at c and where it
/// occurs. The SDF has no interior local maxima in these shapes, so the
/// boundary circle is searched: coarse scan then golden-section refinement.
inline DiscExtreme disc_sdf_max(const HoleGeometry& hole, const Vec2& c, double r, int samples = 256) {
  const auto at = [&](double a) -> Vec2 { return c + r * Vec2(std::cos(a), std::sin(a)); };
  int best = 0;
  double bv = -1e300;
  for (int i = 0; i < samples; ++i) {
    const double v = hole.sdf(at(2 * kPi * i / samples));
    if (v > bv) {
      bv = v;
      best = i;
    }
  }
  const double step = 2 * kPi / samples;
  double lo = (best - 1) * step, hi = (best + 1) * step;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
  double fa = hole.sdf(at(a)), fb = hole.sdf(at(b));
  for (int i = 0; i < 40; ++i) {
    if (fa > fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - g * (hi - lo);
      fa = hole.sdf(at(a));
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + g * (hi - lo);
      fb = hole.sdf(at(b));
    }
  }
  const double am = 0.5 * (lo + hi);
  DiscExtreme out{hole.sdf(at(am)), at(am)};
  if (bv > out.value) out = DiscExtreme{bv, at(best * step)};
  return out;
}

/// Rim contact of a round peg footprint: the positive part of the SDF along
/// the peg circle. `moment` = ∮ sdf⁺·n ds, which equals the area integral of
/// [sdf > 0]·∇sdf over the disc; `weight` = ∮ sdf⁺ ds; `centroid` is the
/// sdf⁺-weighted mean rim point.
struct RimContact {
  Vec2 moment = Vec2::Zero();
  double weight = 0.0;
  Vec2 centroid = Vec2::Zero();
};

inline RimContact rim_contact(const HoleGeometry& hole, const Vec2& c, double r, int samples = 256) {
  RimContact out;
  Vec2 first = Vec2::Zero();
  const double ds = 2 * kPi * r / samples;
  for (int i = 0; i < samples; ++i) {
    const double a = 2 * kPi * (i + 0.5) / samples;
    const Vec2 n(std::cos(a), std::sin(a));
    const double v = hole.sdf(c + r * n);
    if (v <= 0.0) continue;
    out.moment += v * ds * n;
    out.weight += v * ds;
    first += v * ds * (c + r * n);
  }
  out.centroid = out.weight > 0.0 ? Vec2(first / out.weight) : c;
  return out;
}

}  // namespace evcharge
