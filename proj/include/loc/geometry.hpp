#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "loc/error.hpp"

namespace loc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rigid motion p -> R p + t. Rotation must be orthonormal with det +1.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform from_translation(const Vec3& t) {
    return {Mat3::Identity(), t};
  }

  static RigidTransform from_yaw(double yaw, const Vec3& t = Vec3::Zero()) {
    return {Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(), t};
  }

  /// Row-major 4x4 homogeneous matrix.
  static RigidTransform from_matrix(const std::array<double, 16>& m) {
    RigidTransform out;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out.rotation(r, c) = m[r * 4 + c];
      out.translation[r] = m[r * 4 + 3];
    }
    require(out.is_valid(1e-6), "RigidTransform: matrix is not a proper rigid motion");
    return out;
  }

  std::array<double, 16> to_matrix() const {
    std::array<double, 16> m{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[r * 4 + c] = rotation(r, c);
      m[r * 4 + 3] = translation[r];
    }
    m[15] = 1.0;
    return m;
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 operator()(const Vec3& p) const { return apply(p); }

  bool is_valid(double tol = 1e-9) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const double orth = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    return orth <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

/// (a ∘ b)(p) = a(b(p)).
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline RigidTransform invert(const RigidTransform& t) {
  const Mat3 rt = t.rotation.transpose();
  return {rt, -(rt * t.translation)};
}

/// Oriented box: axis-aligned in its own frame, `pose` maps box frame to world.
/// `center` is kept equal to pose.translation by the constructors in this library.
struct TrackedBox {
  std::int64_t frame_id = 0;
  std::int64_t track_id = 0;
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
  RigidTransform pose;

  static TrackedBox make(std::int64_t frame, std::int64_t track, const Vec3& center,
                         const Vec3& size, double yaw) {
    require((size.array() > 0.0).all(), "TrackedBox: sizes must be positive");
    TrackedBox b;
    b.frame_id = frame;
    b.track_id = track;
    b.center = center;
    b.half_extents = 0.5 * size;
    b.pose = RigidTransform::from_yaw(yaw, center);
    return b;
  }

  double yaw() const { return std::atan2(pose.rotation(1, 0), pose.rotation(0, 0)); }
};

/// Boundary inclusive.
inline bool box_contains(const TrackedBox& box, const Vec3& p) {
  const Vec3 local = invert(box.pose).apply(p);
  return (local.cwiseAbs().array() <= box.half_extents.array()).all();
}

struct CameraModel {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  RigidTransform world_to_camera;
  int width = 1, height = 1;

  bool is_valid() const { return fx > 0 && fy > 0 && width > 0 && height > 0; }
};

struct VoxelIndex {
  int i = 0, j = 0, k = 0;
  friend bool operator==(const VoxelIndex&, const VoxelIndex&) = default;
  friend auto operator<=>(const VoxelIndex&, const VoxelIndex&) = default;
};

struct VoxelGridSpec {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 1.0;
  int dim_x = 1, dim_y = 1, dim_z = 1;  // H, W, D

  bool is_valid() const {
    return origin.allFinite() && voxel_size > 0 && std::isfinite(voxel_size) && dim_x > 0 &&
           dim_y > 0 && dim_z > 0;
  }
  void validate() const { require(is_valid(), "VoxelGridSpec: invalid origin, size or dims"); }

  std::size_t cell_count() const {
    return static_cast<std::size_t>(dim_x) * static_cast<std::size_t>(dim_y) *
           static_cast<std::size_t>(dim_z);
  }
  bool contains(const VoxelIndex& v) const {
    return v.i >= 0 && v.j >= 0 && v.k >= 0 && v.i < dim_x && v.j < dim_y && v.k < dim_z;
  }
  /// Row-major with z fastest.
  std::size_t linear(const VoxelIndex& v) const {
    return (static_cast<std::size_t>(v.i) * dim_y + v.j) * dim_z + v.k;
  }
  VoxelIndex unlinear(std::size_t idx) const {
    const int k = static_cast<int>(idx % dim_z);
    idx /= dim_z;
    const int j = static_cast<int>(idx % dim_y);
    return {static_cast<int>(idx / dim_y), j, k};
  }
  Vec3 center(const VoxelIndex& v) const {
    return origin + voxel_size * Vec3(v.i + 0.5, v.j + 0.5, v.k + 0.5);
  }
  Vec3 extent() const { return voxel_size * Vec3(dim_x, dim_y, dim_z); }

  friend bool operator==(const VoxelGridSpec& a, const VoxelGridSpec& b) {
    return a.origin == b.origin && a.voxel_size == b.voxel_size && a.dim_x == b.dim_x &&
           a.dim_y == b.dim_y && a.dim_z == b.dim_z;
  }
};

/// Half-open cells [origin + k·size, origin + (k+1)·size).
inline std::optional<VoxelIndex> voxel_of(const VoxelGridSpec& spec, const Vec3& p) {
  if (!p.allFinite()) return std::nullopt;
  const Vec3 rel = (p - spec.origin) / spec.voxel_size;
  const double fi = std::floor(rel.x()), fj = std::floor(rel.y()), fk = std::floor(rel.z());
  if (fi < 0 || fj < 0 || fk < 0 || fi >= spec.dim_x || fj >= spec.dim_y || fk >= spec.dim_z)
    return std::nullopt;
  return VoxelIndex{static_cast<int>(fi), static_cast<int>(fj), static_cast<int>(fk)};
}

}  // namespace loc
