#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "evcharge/geometry.hpp"
#include "evcharge/point_cloud.hpp"

namespace evcharge {

/// Per-point normals from the smallest eigenvector of the k-NN covariance,
/// flipped to face `viewpoint` (the camera origin by default). Points whose
/// neighborhood covariance has rank < 2 are marked invalid.
inline PointCloud estimate_normals(const PointCloud& cloud, int k, const Vec3& viewpoint = Vec3::Zero()) {
  require(k >= 3, ErrorKind::kInvalidArgument, "k must be at least 3");
  require(cloud.size() >= static_cast<std::size_t>(k) + 1, ErrorKind::kInvalidArgument,
          "cloud has fewer than k+1 points");
  PointCloud out = cloud;
  out.normals.assign(cloud.size(), Vec3::UnitZ());
  out.valid.assign(cloud.size(), 1);
  const SpatialGrid grid(cloud.points, surface_cell_size(cloud.points, static_cast<double>(k)));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nb = grid.nearest(cloud.points[i], static_cast<std::size_t>(k) + 1);
    Vec3 mean = Vec3::Zero();
    for (auto j : nb) mean += cloud.points[j];
    mean /= static_cast<double>(nb.size());
    Mat3 cov = Mat3::Zero();
    for (auto j : nb) {
      const Vec3 d = cloud.points[j] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 ev = eig.eigenvalues();  // ascending
    if (!(ev[1] > 1e-12 * std::max(ev[2], 1e-300))) {
      out.valid[i] = 0;
      continue;
    }
    Vec3 n = eig.eigenvectors().col(0).normalized();
    if (n.dot(viewpoint - cloud.points[i]) < 0.0) n = -n;
    out.normals[i] = n;
  }
  return out;
}

struct KMeansOptions {
  int restarts = 10;  // capped at 50
  int max_iterations = 100;
};

struct Segmentation {
  std::vector<int> labels;          // per input point; -1 for invalid points
  std::vector<Vec3> centroids;      // unit mean normal per cluster
  std::vector<std::size_t> sizes;
  double inertia = 0.0;             // sum of squared chord distances
  double separation = 0.0;          // smallest angle between centroids, rad
  double spread = 0.0;              // RMS angle of members to their centroid, rad
};

namespace detail {

inline bool lex_less(const Vec3& a, const Vec3& b) {
  if (a.x() != b.x()) return a.x() < b.x();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.z() < b.z();
}

struct KMeansRun {
  std::vector<int> assign;
  std::vector<Vec3> centers;
  double inertia = std::numeric_limits<double>::infinity();
};

inline KMeansRun lloyd(const std::vector<Vec3>& x, int k, std::mt19937_64& rng, int max_iter) {
  const std::size_t n = x.size();
  KMeansRun run;
  // k-means++ seeding on chord distance
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  run.centers.push_back(x[pick(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(run.centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : run.centers) best = std::min(best, (x[i] - c).squaredNorm());
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) break;
    std::uniform_real_distribution<double> u(0.0, total);
    double r = u(rng);
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= d2[i];
      if (r <= 0.0) {
        chosen = i;
        break;
      }
    }
    run.centers.push_back(x[chosen]);
  }
  if (static_cast<int>(run.centers.size()) < k) return run;  // all identical

  run.assign.assign(n, -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = (x[i] - run.centers[0]).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (x[i] - run.centers[c]).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (run.assign[i] != best) {
        run.assign[i] = best;
        changed = true;
      }
    }
    std::vector<Vec3> sum(k, Vec3::Zero());
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[run.assign[i]] += x[i];
      ++cnt[run.assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (cnt[c] == 0 || sum[c].norm() < 1e-12) {
        // re-seed an empty cluster at the worst-fit point
        std::size_t worst = 0;
        double wd = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = (x[i] - run.centers[run.assign[i]]).squaredNorm();
          if (d > wd) {
            wd = d;
            worst = i;
          }
        }
        run.centers[c] = x[worst];
        changed = true;
      } else {
        run.centers[c] = sum[c].normalized();
      }
    }
    if (!changed) break;
  }
  run.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) run.inertia += (x[i] - run.centers[run.assign[i]]).squaredNorm();
  return run;
}

}  // namespace detail

/// Spherical k-means on unit normals with chord distance and k-means++
/// seeding. The valid normals are sorted before clustering, so the partition
/// does not depend on input order. Clusters are numbered by decreasing size.
inline Segmentation segment_by_normal_kmeans(const PointCloud& cloud, int k, std::uint64_t seed,
                                             const KMeansOptions& opts = {}) {
  require(cloud.has_normals(), ErrorKind::kInvalidArgument, "segmentation needs normals");
  require(k >= 1, ErrorKind::kInvalidArgument, "k must be positive");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.is_valid(i)) idx.push_back(i);
  require(idx.size() >= static_cast<std::size_t>(k), ErrorKind::kInvalidArgument, "fewer valid points than K");

  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return detail::lex_less(cloud.normals[a], cloud.normals[b]); });
  std::vector<Vec3> x;
  x.reserve(idx.size());
  for (auto i : idx) x.push_back(cloud.normals[i]);

  std::size_t distinct = 1;
  for (std::size_t i = 1; i < x.size() && distinct < static_cast<std::size_t>(k); ++i) {
    bool fresh = true;
    for (std::size_t j = 0; j < i && fresh; ++j) fresh = (x[i] - x[j]).squaredNorm() > 1e-18;
    if (fresh) ++distinct;
  }
  if (distinct < static_cast<std::size_t>(k)) {
    fail(ErrorKind::kConvergenceFailure, "fewer distinct normals than clusters");
  }

  const int restarts = std::clamp(opts.restarts, 1, 50);
  detail::KMeansRun best;
  for (int r = 0; r < restarts; ++r) {
    std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(r + 1));
    detail::KMeansRun run = detail::lloyd(x, k, rng, opts.max_iterations);
    if (run.assign.empty()) continue;
    if (run.inertia < best.inertia) best = std::move(run);
  }
  if (best.assign.empty()) fail(ErrorKind::kConvergenceFailure, "k-means could not seed distinct centers");

  // canonical numbering: larger clusters first, then centroid order
  std::vector<std::size_t> sizes(k, 0);
  for (int a : best.assign) ++sizes[a];
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (sizes[a] != sizes[b]) return sizes[a] > sizes[b];
    return detail::lex_less(best.centers[a], best.centers[b]);
  });
  std::vector<int> rename(k);
  for (int c = 0; c < k; ++c) rename[order[c]] = c;

  Segmentation seg;
  seg.labels.assign(cloud.size(), -1);
  seg.centroids.resize(k);
  seg.sizes.resize(k);
  for (int c = 0; c < k; ++c) {
    seg.centroids[rename[c]] = best.centers[c];
    seg.sizes[rename[c]] = sizes[c];
  }
  double sq = 0.0;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const int c = rename[best.assign[j]];
    seg.labels[idx[j]] = c;
    const double a = angle_between(x[j], seg.centroids[c]);
    sq += a * a;
  }
  seg.inertia = best.inertia;
  seg.spread = std::sqrt(sq / static_cast<double>(idx.size()));
  seg.separation = kPi;
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      seg.separation = std::min(seg.separation, angle_between(seg.centroids[a], seg.centroids[b]));
  if (k == 1) seg.separation = 0.0;
  return seg;
}

struct ClusterSelectOptions {
  double max_size_ratio = 0.8;
  // Centroid angle divided by the RMS within-cluster angle. Below this the
  // two normal populations overlap and the split is not trustworthy.
  double min_separation_score = 4.0;
};

struct CoverCluster {
  PointCloud cloud;
  double size_ratio = 0.0;   // smaller / larger
  double separation_score = 0.0;
};

/// The smaller of two clusters, which is the cover when the plane dominates
/// the view. Rejects ambiguous splits.
inline CoverCluster select_cover_cluster(const PointCloud& cloud, const Segmentation& seg,
                                         const ClusterSelectOptions& opts = {}) {
  require(seg.sizes.size() == 2, ErrorKind::kInvalidArgument, "expected exactly two clusters");
  const std::size_t small = seg.sizes[0] <= seg.sizes[1] ? 0 : 1;
  const std::size_t large = 1 - small;
  CoverCluster out;
  out.size_ratio = static_cast<double>(seg.sizes[small]) / static_cast<double>(std::max<std::size_t>(seg.sizes[large], 1));
  out.separation_score = seg.spread > 0.0 ? seg.separation / seg.spread : std::numeric_limits<double>::infinity();
  if (out.size_ratio > opts.max_size_ratio) {
    fail(ErrorKind::kAmbiguousCluster,
         "cluster sizes too similar (ratio " + std::to_string(out.size_ratio) + ")");
  }
  if (out.separation_score < opts.min_separation_score) {
    fail(ErrorKind::kAmbiguousCluster,
         "normal clusters overlap (separation score " + std::to_string(out.separation_score) + ")");
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < seg.labels.size(); ++i)
    if (seg.labels[i] == static_cast<int>(small)) idx.push_back(i);
  out.cloud = cloud.subset(idx);
  return out;
}

struct CoverEstimate {
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Pose pose;                        // H_cb
  std::size_t cluster_size = 0;
  double plane_fit_angle = 0.0;     // mean-normal vs position-plane-fit normal, rad
};

/// ẑ = mean cover normal; ŷ = plane y axis seen from the camera, projected
/// orthogonal to ẑ; x̂ = ŷ × ẑ; origin = cluster centroid.
inline CoverEstimate cover_pose(const PointCloud& cover, const Rotation& r_cw, const Vec3& y_wp) {
  require(!cover.empty(), ErrorKind::kEmptyResult, "cover cluster is empty");
  require(cover.has_normals(), ErrorKind::kInvalidArgument, "cover cluster has no normals");
  Vec3 zsum = Vec3::Zero();
  for (std::size_t i = 0; i < cover.size(); ++i)
    if (cover.is_valid(i)) zsum += cover.normals[i];
  require(zsum.norm() > 1e-9, ErrorKind::kDegenerateGeometry, "cover normals cancel out");
  const Vec3 z = zsum.normalized();

  const Vec3 y_cp = r_cw * y_wp;
  const Vec3 y_proj = y_cp - y_cp.dot(z) * z;
  if (y_proj.norm() < 1e-3) fail(ErrorKind::kDegenerateGeometry, "plane y axis is parallel to the cover normal");
  const Vec3 y = y_proj.normalized();
  const Vec3 x = cover_x_axis(y, z);

  CoverEstimate est;
  est.center = cover.centroid();
  est.normal = z;
  est.pose = Pose(rotation_from_axes(x, y, z), est.center, FrameId::kCamera, FrameId::kCover);
  est.cluster_size = cover.size();

  if (cover.size() >= 3) {
    Mat3 cov = Mat3::Zero();
    for (const auto& p : cover.points) cov += (p - est.center) * (p - est.center).transpose();
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 fit = eig.eigenvectors().col(0);
    est.plane_fit_angle = std::acos(std::min(1.0, std::abs(fit.dot(z))));
  }
  return est;
}

struct AttemptResult {
  double x1 = 0.0;
  double x2 = 0.0;
  double xe = 0.0;
};

inline AttemptResult attempt_correction(double x1, double x2) {
  require(std::isfinite(x1) && std::isfinite(x2), ErrorKind::kInvalidArgument, "non-finite probe distances");
  require(x2 >= 0.0, ErrorKind::kInvalidArgument, "measured travel must be non-negative");
  return AttemptResult{x1, x2, -(x2 - x1)};
}

}  // namespace evcharge
