#pragma once

// Normal estimation, mesh voxelization and KNN label transfer. Together with
// poisson.hpp these turn a fused point cloud into a dense labelled grid.

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>

#include "loc/classes.hpp"
#include "loc/knn.hpp"
#include "loc/mesh.hpp"
#include "loc/poisson.hpp"
#include "loc/scene.hpp"

namespace loc {

namespace detail {

inline OrientedPointCloud normals_impl(const PointCloud& cloud, int k, const std::vector<Vec3>& viewpoints) {
  require(k >= 3, "estimate_normals: k must be >= 3");
  require(cloud.size() >= static_cast<std::size_t>(k), "estimate_normals: fewer points than k");
  PointIndex index(cloud.positions);
  OrientedPointCloud out;
  out.positions = cloud.positions;
  out.normals.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nn = index.knn(cloud.positions[i], k);
    Vec3 mean = Vec3::Zero();
    for (const auto& n : nn) mean += index.point(n.index);
    mean /= static_cast<double>(nn.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& n : nn) {
      const Vec3 d = index.point(n.index) - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    Vec3 normal = es.eigenvectors().col(0).normalized();
    const Vec3& vp = viewpoints.size() == 1 ? viewpoints[0] : viewpoints[i];
    if (normal.dot(cloud.positions[i] - vp) < 0) normal = -normal;
    out.normals[i] = normal;
  }
  return out;
}

}  // namespace detail

/// Smallest-eigenvector normals of the k-NN covariance, flipped so that
/// n . (p - viewpoint) >= 0.
inline OrientedPointCloud estimate_normals(const PointCloud& cloud, int k, const Vec3& viewpoint) {
  return detail::normals_impl(cloud, k, {viewpoint});
}

/// Same, but each point is oriented away from its own recorded sensor origin.
inline OrientedPointCloud estimate_normals(const PointCloud& cloud, int k) {
  require(cloud.origins.has_value(), "estimate_normals: cloud has no sensor origins");
  cloud.validate();
  return detail::normals_impl(cloud, k, *cloud.origins);
}

/// Separating-axis triangle/box test; touching counts as overlap.
inline bool triangle_box_overlap(const Vec3& box_center, const Vec3& half, const Vec3& a, const Vec3& b,
                                 const Vec3& c) {
  const Vec3 v0 = a - box_center, v1 = b - box_center, v2 = c - box_center;
  const Vec3 e[3] = {v1 - v0, v2 - v1, v0 - v2};
  const Vec3 axes[3] = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  auto separated = [&](const Vec3& axis) {
    const double p0 = axis.dot(v0), p1 = axis.dot(v1), p2 = axis.dot(v2);
    const double r = half.x() * std::abs(axis.x()) + half.y() * std::abs(axis.y()) + half.z() * std::abs(axis.z());
    return std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r;
  };
  for (const auto& u : axes)
    for (const auto& ed : e)
      if (separated(u.cross(ed))) return false;
  for (const auto& u : axes)
    if (separated(u)) return false;
  return !separated(e[0].cross(e[1]));
}

/// Surface-shell voxelization: a cell is kOccupied iff some triangle touches it.
inline DenseLabelGrid voxelize_mesh(const TriangleMesh& mesh, const VoxelGridSpec& spec) {
  spec.validate();
  DenseLabelGrid grid(spec, kFree);
  const double s = spec.voxel_size;
  const Vec3 half = Vec3::Constant(0.5 * s);
  const int dims[3] = {spec.dim_x, spec.dim_y, spec.dim_z};
  for (const auto& f : mesh.triangles) {
    const Vec3 &a = mesh.vertices[f[0]], &b = mesh.vertices[f[1]], &c = mesh.vertices[f[2]];
    const Vec3 lo = (a.cwiseMin(b).cwiseMin(c) - spec.origin) / s;
    const Vec3 hi = (a.cwiseMax(b).cwiseMax(c) - spec.origin) / s;
    int i0[3], i1[3];
    bool outside = false;
    for (int d = 0; d < 3; ++d) {
      // ceil(lo) - 1 keeps the cell whose upper face the triangle touches.
      i0[d] = static_cast<int>(std::max(0.0, std::ceil(lo(d)) - 1.0));
      i1[d] = static_cast<int>(std::min<double>(dims[d] - 1, std::floor(hi(d))));
      if (i0[d] > i1[d]) outside = true;
    }
    if (outside) continue;
    for (int i = i0[0]; i <= i1[0]; ++i)
      for (int j = i0[1]; j <= i1[1]; ++j)
        for (int k = i0[2]; k <= i1[2]; ++k) {
          const VoxelIndex v{i, j, k};
          if (grid.at(v) == kOccupied) continue;
          if (triangle_box_overlap(spec.center(v), half, a, b, c)) grid.at(v) = kOccupied;
        }
  }
  return grid;
}

/// Majority vote over the k nearest labelled points to each occupied cell
/// centre (ties go to the smallest class id). FREE cells are untouched.
inline DenseLabelGrid knn_assign_labels(const DenseLabelGrid& grid, const PointCloud& labeled, int k = 5) {
  require(k >= 1, "knn_assign_labels: k must be >= 1");
  require(labeled.has_labels(), "knn_assign_labels: cloud has no labels");
  require(!labeled.empty(), "knn_assign_labels: empty labelled cloud");
  labeled.validate();
  PointIndex index(labeled.positions);
  const auto& lab = *labeled.labels;
  DenseLabelGrid out = grid;
  for (std::size_t idx = 0; idx < out.labels.size(); ++idx) {
    if (out.labels[idx] == kFree) continue;
    const auto nn = index.knn(grid.spec.center(grid.spec.unlinear(idx)), k);
    std::map<ClassId, int> votes;
    for (const auto& n : nn) ++votes[lab[n.index]];
    ClassId best = votes.begin()->first;
    int best_n = 0;
    for (const auto& [c, n] : votes)
      if (n > best_n) {
        best = c;
        best_n = n;
      }
    out.labels[idx] = best;
  }
  return out;
}

}  // namespace loc
