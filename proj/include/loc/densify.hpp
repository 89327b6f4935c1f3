#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "loc/error.hpp"
#include "loc/geometry.hpp"
#include "loc/scene.hpp"

namespace loc {

struct SeparatedFrame {
  std::int64_t frame_id = 0;
  PointCloud static_points;
  /// Per track, points in that box's canonical frame.
  std::map<std::int64_t, PointCloud> dynamic_points;
  std::size_t ego_filtered = 0;

  std::size_t dynamic_count() const {
    std::size_t n = 0;
    for (const auto& [id, c] : dynamic_points) n += c.size();
    return n;
  }
};

/// Ego-box points are dropped first. A point inside several boxes goes to the
/// box whose centre is nearest (ties: lower track id).
inline SeparatedFrame separate_dynamic_static(const PointCloud& cloud,
                                              std::span<const TrackedBox> boxes,
                                              const TrackedBox& ego_box) {
  cloud.validate();
  for (const auto& b : boxes)
    if (b.frame_id != cloud.frame_id)
      throw ValidationError("separate_dynamic_static: box frame " + std::to_string(b.frame_id) +
                            " does not match cloud frame " + std::to_string(cloud.frame_id));

  std::vector<RigidTransform> to_box;
  to_box.reserve(boxes.size());
  for (const auto& b : boxes) to_box.push_back(invert(b.pose));

  SeparatedFrame out;
  out.frame_id = cloud.frame_id;
  out.static_points = PointCloud::like(cloud, cloud.frame_id);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    if (box_contains(ego_box, p)) {
      ++out.ego_filtered;
      continue;
    }
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      if (!box_contains(boxes[b], p)) continue;
      const double d2 = (p - boxes[b].pose.translation).squaredNorm();
      if (best < 0 || d2 < best_d2 || (d2 == best_d2 && boxes[b].track_id < boxes[best].track_id)) {
        best = static_cast<int>(b);
        best_d2 = d2;
      }
    }
    if (best < 0) {
      out.static_points.push_from(cloud, i, p);
      continue;
    }
    const auto& box = boxes[best];
    auto [it, inserted] = out.dynamic_points.try_emplace(box.track_id, PointCloud::like(cloud, cloud.frame_id));
    const RigidTransform& t = to_box[best];
    it->second.push_from(cloud, i, t.apply(p));
    if (it->second.origins) it->second.origins->back() = t.apply(cloud.origins->at(i));
  }
  return out;
}

/// Union of static points in the coordinates of frame `reference`.
/// `poses[f]` maps frame f to the world.
inline PointCloud aggregate_static(std::span<const SeparatedFrame> frames,
                                   std::span<const RigidTransform> poses, std::int64_t reference) {
  auto pose_of = [&](std::int64_t f) -> const RigidTransform& {
    if (f < 0 || static_cast<std::size_t>(f) >= poses.size())
      throw ValidationError("aggregate_static: missing pose for frame " + std::to_string(f));
    return poses[static_cast<std::size_t>(f)];
  };
  const RigidTransform world_to_ref = invert(pose_of(reference));
  PointCloud out;
  out.frame_id = reference;
  bool first = true;
  for (const auto& fr : frames) {
    PointCloud moved = transformed(fr.static_points, compose(world_to_ref, pose_of(fr.frame_id)));
    if (first) {
      out = PointCloud::like(moved, reference);
      first = false;
    }
    out.append(moved);
  }
  out.frame_id = reference;
  return out;
}

/// Per-track union across frames, still in canonical box coordinates.
inline std::map<std::int64_t, PointCloud> aggregate_dynamic(std::span<const SeparatedFrame> frames) {
  std::map<std::int64_t, PointCloud> out;
  for (const auto& fr : frames)
    for (const auto& [track, cloud] : fr.dynamic_points) {
      auto [it, inserted] = out.try_emplace(track, PointCloud::like(cloud, -1));
      it->second.append(cloud);
    }
  return out;
}

/// P_t = [static (already in frame t), each track's aggregate placed by its
/// frame-t box]. Tracks without a frame-t box are omitted.
inline PointCloud fuse_frame(const PointCloud& static_agg,
                             const std::map<std::int64_t, PointCloud>& dynamic_agg,
                             std::span<const TrackedBox> boxes_at_t, std::int64_t t) {
  PointCloud out = static_agg;
  out.frame_id = t;
  for (const auto& [track, cloud] : dynamic_agg) {
    const TrackedBox* box = nullptr;
    for (const auto& b : boxes_at_t)
      if (b.track_id == track && b.frame_id == t) {
        box = &b;
        break;
      }
    if (!box) continue;
    out.append(transformed(cloud, box->pose));
  }
  out.frame_id = t;
  return out;
}

}  // namespace loc
