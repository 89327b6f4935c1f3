#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "loc/classes.hpp"
#include "loc/error.hpp"
#include "loc/geometry.hpp"

namespace loc {

struct PointCloud {
  std::vector<Vec3> positions;
  std::optional<std::vector<ClassId>> labels;
  /// Optional per-point sensor origin (same coordinates as positions); used to
  /// orient surface normals away from the sensor that observed each point.
  std::optional<std::vector<Vec3>> origins;
  std::int64_t frame_id = 0;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  bool has_labels() const { return labels.has_value(); }

  void validate() const {
    if (labels) {
      require(labels->size() == positions.size(), "PointCloud: label count != point count");
      for (ClassId c : *labels) require(is_semantic(c), "PointCloud: label out of range");
    }
    if (origins) require(origins->size() == positions.size(), "PointCloud: origin count != point count");
  }

  /// Concatenation; an attribute survives only when both sides carry it.
  void append(const PointCloud& other) {
    if (other.empty()) return;
    if (empty()) {
      positions = other.positions;
      labels = other.labels;
      origins = other.origins;
      return;
    }
    positions.insert(positions.end(), other.positions.begin(), other.positions.end());
    if (labels && other.labels)
      labels->insert(labels->end(), other.labels->begin(), other.labels->end());
    else
      labels.reset();
    if (origins && other.origins)
      origins->insert(origins->end(), other.origins->begin(), other.origins->end());
    else
      origins.reset();
  }

  /// Copies point `i` of `src` (with its attributes) to the end of this cloud.
  /// Attribute presence must agree between the two clouds.
  void push_from(const PointCloud& src, std::size_t i, const Vec3& position) {
    positions.push_back(position);
    if (labels) labels->push_back((*src.labels)[i]);
    if (origins) origins->push_back((*src.origins)[i]);
  }

  void push_back(const Vec3& p, std::optional<ClassId> label = std::nullopt) {
    require(label.has_value() == labels.has_value(), "PointCloud: label presence mismatch");
    positions.push_back(p);
    if (labels) labels->push_back(*label);
    if (origins) origins->push_back(Vec3::Zero());
  }

  /// Empty cloud carrying the same attribute set as `proto`.
  static PointCloud like(const PointCloud& proto, std::int64_t frame) {
    PointCloud out;
    out.frame_id = frame;
    if (proto.labels) out.labels.emplace();
    if (proto.origins) out.origins.emplace();
    return out;
  }
};

inline PointCloud transformed(const PointCloud& cloud, const RigidTransform& t) {
  PointCloud out = cloud;
  for (Vec3& p : out.positions) p = t.apply(p);
  if (out.origins)
    for (Vec3& o : *out.origins) o = t.apply(o);
  return out;
}

/// Attaches the sensor origin (0,0,0) of the cloud's own frame to every point.
inline PointCloud with_sensor_origins(PointCloud cloud) {
  cloud.origins.emplace(cloud.size(), Vec3::Zero());
  return cloud;
}

/// Dense per-voxel class ids. Cells hold kFree, kUnknown, kOccupied (occupancy
/// without semantics) or a semantic class id.
struct DenseLabelGrid {
  VoxelGridSpec spec;
  std::vector<ClassId> labels;

  DenseLabelGrid() = default;
  explicit DenseLabelGrid(const VoxelGridSpec& s, ClassId fill = kFree)
      : spec(s), labels(s.cell_count(), fill) {
    s.validate();
  }

  ClassId at(const VoxelIndex& v) const { return labels[spec.linear(v)]; }
  ClassId& at(const VoxelIndex& v) { return labels[spec.linear(v)]; }
  bool occupied(const VoxelIndex& v) const { return at(v) != kFree; }

  std::size_t occupied_count() const {
    std::size_t n = 0;
    for (ClassId c : labels) n += (c != kFree);
    return n;
  }

  void validate() const {
    spec.validate();
    require(labels.size() == spec.cell_count(), "DenseLabelGrid: size mismatch");
    for (ClassId c : labels)
      require(c == kFree || c == kUnknown || c == kOccupied || is_semantic(c),
              "DenseLabelGrid: bad class id");
  }

  friend bool operator==(const DenseLabelGrid&, const DenseLabelGrid&) = default;
};

/// Occupied cells with at least one in-grid FREE 6-neighbour.
inline std::vector<VoxelIndex> surface_cells(const DenseLabelGrid& grid) {
  static constexpr int kN[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                   {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<VoxelIndex> out;
  const auto& s = grid.spec;
  for (int i = 0; i < s.dim_x; ++i)
    for (int j = 0; j < s.dim_y; ++j)
      for (int k = 0; k < s.dim_z; ++k) {
        const VoxelIndex v{i, j, k};
        if (!grid.occupied(v)) continue;
        for (const auto& d : kN) {
          const VoxelIndex n{i + d[0], j + d[1], k + d[2]};
          if (s.contains(n) && !grid.occupied(n)) {
            out.push_back(v);
            break;
          }
        }
      }
  return out;
}

}  // namespace loc
