#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "evcharge/geometry.hpp"

namespace evcharge {

// Ground-truth surface labels attached by the scene sampler; never read by
// the estimation code.
enum class SurfaceLabel : std::int8_t { kUnknown = -1, kPlane = 0, kCover = 1, kBackground = 2 };

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;          // empty or same length as points
  std::vector<std::uint8_t> valid;    // empty means all valid
  std::vector<SurfaceLabel> labels;   // empty or same length as points
  FrameId frame = FrameId::kCamera;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty(); }
  bool has_labels() const { return !labels.empty(); }
  bool is_valid(std::size_t i) const { return valid.empty() || valid[i] != 0; }

  std::size_t valid_count() const {
    if (valid.empty()) return points.size();
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  }

  void check() const {
    require(normals.empty() || normals.size() == points.size(), ErrorKind::kInvalidArgument,
            "normals and points differ in length");
    require(valid.empty() || valid.size() == points.size(), ErrorKind::kInvalidArgument,
            "validity flags and points differ in length");
    require(labels.empty() || labels.size() == points.size(), ErrorKind::kInvalidArgument,
            "labels and points differ in length");
    for (const auto& n : normals) {
      require(std::abs(n.norm() - 1.0) <= 1e-6, ErrorKind::kInvalidArgument, "normal is not unit length");
    }
  }

  // Copies the per-point attributes of `idx` into a new cloud.
  PointCloud subset(const std::vector<std::size_t>& idx) const {
    PointCloud out;
    out.frame = frame;
    out.points.reserve(idx.size());
    for (std::size_t i : idx) {
      out.points.push_back(points[i]);
      if (has_normals()) out.normals.push_back(normals[i]);
      if (!valid.empty()) out.valid.push_back(valid[i]);
      if (has_labels()) out.labels.push_back(labels[i]);
    }
    return out;
  }

  Vec3 centroid() const {
    require(!points.empty(), ErrorKind::kEmptyResult, "centroid of an empty cloud");
    Vec3 c = Vec3::Zero();
    for (const auto& p : points) c += p;
    return c / static_cast<double>(points.size());
  }
};

/// Uniform hash grid over a fixed point set for radius and k-nearest queries.
class SpatialGrid {
 public:
  SpatialGrid(const std::vector<Vec3>& pts, double cell) : pts_(pts), cell_(cell) {
    require(cell > 0.0, ErrorKind::kInvalidArgument, "grid cell must be positive");
    cells_.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(index(pts[i]))].push_back(i);
  }

  double cell() const { return cell_; }

  std::vector<std::size_t> within(const Vec3& q, double radius) const {
    std::vector<std::size_t> out;
    const int reach = static_cast<int>(std::ceil(radius / cell_));
    const Eigen::Vector3i c = index(q);
    const double r2 = radius * radius;
    for (int dx = -reach; dx <= reach; ++dx)
      for (int dy = -reach; dy <= reach; ++dy)
        for (int dz = -reach; dz <= reach; ++dz) {
          auto it = cells_.find(key(c + Eigen::Vector3i(dx, dy, dz)));
          if (it == cells_.end()) continue;
          for (std::size_t i : it->second)
            if ((pts_[i] - q).squaredNorm() <= r2) out.push_back(i);
        }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// k nearest points to q (q itself included when it is in the set), nearest
  /// first; ties broken by index.
  std::vector<std::size_t> nearest(const Vec3& q, std::size_t k) const {
    k = std::min(k, pts_.size());
    if (k == 0) return {};
    std::vector<std::pair<double, std::size_t>> found;
    const Eigen::Vector3i c = index(q);
    for (int ring = 0;; ++ring) {
      for (int dx = -ring; dx <= ring; ++dx)
        for (int dy = -ring; dy <= ring; ++dy)
          for (int dz = -ring; dz <= ring; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            auto it = cells_.find(key(c + Eigen::Vector3i(dx, dy, dz)));
            if (it == cells_.end()) continue;
            for (std::size_t i : it->second) found.emplace_back((pts_[i] - q).squaredNorm(), i);
          }
      // Everything within ring*cell of q has been visited.
      const double safe = ring * cell_;
      const auto n_safe = std::count_if(found.begin(), found.end(),
                                        [&](const auto& f) { return f.first <= safe * safe; });
      if (static_cast<std::size_t>(n_safe) >= k || found.size() == pts_.size()) break;
    }
    std::sort(found.begin(), found.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(found[i].second);
    return out;
  }

 private:
  Eigen::Vector3i index(const Vec3& p) const {
    return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / cell_)), static_cast<int>(std::floor(p.y() / cell_)),
                           static_cast<int>(std::floor(p.z() / cell_)));
  }
  static std::int64_t key(const Eigen::Vector3i& c) {
    const auto u = [](int v) { return static_cast<std::int64_t>(v) & 0x1FFFFF; };
    return (u(c.x()) << 42) | (u(c.y()) << 21) | u(c.z());
  }

  const std::vector<Vec3>& pts_;
  double cell_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
};

/// Cell size that puts roughly `per_cell` points in a cell of a cloud that is
/// locally two-dimensional (surfaces seen by a depth camera).
inline double surface_cell_size(const std::vector<Vec3>& pts, double per_cell = 4.0) {
  require(!pts.empty(), ErrorKind::kEmptyResult, "empty cloud");
  Vec3 lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Vec3 ext = (hi - lo).cwiseMax(1e-6);
  std::sort(ext.data(), ext.data() + 3);
  const double area = ext[1] * ext[2];
  return std::max(std::sqrt(area * per_cell / static_cast<double>(pts.size())), 1e-5);
}

struct Box {
  Vec3 lo;
  Vec3 hi;
};

/// Points strictly inside the box.
inline PointCloud crop(const PointCloud& cloud, const Box& box) {
  require((box.hi.array() >= box.lo.array()).all(), ErrorKind::kInvalidArgument, "crop box has lo > hi");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    if ((p.array() > box.lo.array()).all() && (p.array() < box.hi.array()).all()) keep.push_back(i);
  }
  if (keep.empty()) fail(ErrorKind::kEmptyResult, "crop removed every point");
  return cloud.subset(keep);
}

/// Averages points falling in the same voxel. Labels take the majority of
/// the voxel; normals and validity are dropped.
inline PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  require(voxel > 0.0, ErrorKind::kInvalidArgument, "voxel size must be positive");
  struct Acc {
    Vec3 sum = Vec3::Zero();
    int n = 0;
    int votes[3] = {0, 0, 0};
    std::size_t first = 0;
  };
  std::unordered_map<std::int64_t, Acc> acc;
  std::vector<std::int64_t> order;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const auto u = [&](double v) { return static_cast<std::int64_t>(std::floor(v / voxel)) & 0x1FFFFF; };
    const std::int64_t k = (u(p.x()) << 42) | (u(p.y()) << 21) | u(p.z());
    auto [it, inserted] = acc.try_emplace(k);
    if (inserted) {
      it->second.first = i;
      order.push_back(k);
    }
    it->second.sum += p;
    ++it->second.n;
    if (cloud.has_labels() && cloud.labels[i] != SurfaceLabel::kUnknown)
      ++it->second.votes[static_cast<int>(cloud.labels[i])];
  }
  PointCloud out;
  out.frame = cloud.frame;
  for (auto k : order) {
    const Acc& a = acc[k];
    out.points.push_back(a.sum / a.n);
    if (cloud.has_labels()) {
      const int* best = std::max_element(a.votes, a.votes + 3);
      out.labels.push_back(*best == 0 ? SurfaceLabel::kUnknown : static_cast<SurfaceLabel>(best - a.votes));
    }
  }
  return out;
}

/// Drops points with fewer than `min_neighbors` other points within `radius`.
inline PointCloud remove_isolated(const PointCloud& cloud, double radius, int min_neighbors) {
  require(radius > 0.0, ErrorKind::kInvalidArgument, "radius must be positive");
  if (cloud.empty()) return cloud;
  const SpatialGrid grid(cloud.points, radius);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto n = grid.within(cloud.points[i], radius).size() - 1;
    if (static_cast<int>(n) >= min_neighbors) keep.push_back(i);
  }
  return cloud.subset(keep);
}

// ASCII PLY with an optional normal triple per vertex.
inline void write_ply(const PointCloud& cloud, const std::string& path) {
  cloud.check();
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.has_normals()) out << "property double nx\nproperty double ny\nproperty double nz\n";
  out << "end_header\n";
  out.precision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z();
    if (cloud.has_normals()) {
      const Vec3& n = cloud.normals[i];
      out << ' ' << n.x() << ' ' << n.y() << ' ' << n.z();
    }
    out << '\n';
  }
  if (!out) fail(ErrorKind::kIo, "write failed for " + path);
}

inline PointCloud read_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read " + path);
  std::string line;
  std::getline(in, line);
  if (line != "ply") fail(ErrorKind::kIo, path + " is not a PLY file");
  std::size_t count = 0;
  std::vector<std::string> props;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") fail(ErrorKind::kIo, "only ASCII PLY is supported");
    } else if (word == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  const auto find = [&](const std::string& n) {
    auto it = std::find(props.begin(), props.end(), n);
    return it == props.end() ? -1 : static_cast<int>(it - props.begin());
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  const int inx = find("nx"), iny = find("ny"), inz = find("nz");
  if (ix < 0 || iy < 0 || iz < 0) fail(ErrorKind::kIo, "PLY vertex lacks x/y/z");
  const bool normals = inx >= 0 && iny >= 0 && inz >= 0;
  PointCloud cloud;
  std::vector<double> vals(props.size());
  for (std::size_t i = 0; i < count; ++i) {
    for (auto& v : vals)
      if (!(in >> v)) fail(ErrorKind::kIo, "truncated PLY body in " + path);
    cloud.points.emplace_back(vals[ix], vals[iy], vals[iz]);
    if (normals) cloud.normals.push_back(Vec3(vals[inx], vals[iny], vals[inz]).normalized());
  }
  return cloud;
}

}  // namespace evcharge
