#pragma once

// Stage drivers shared by the command-line tool and the tests.

#include <cstdint>
#include <map>
#include <vector>

#include "loc/densify.hpp"
#include "loc/poisson.hpp"
#include "loc/scene.hpp"
#include "loc/surface_recon.hpp"

namespace loc {

struct DensifyOptions {
  std::int64_t reference = 0;
  int grid_res = 64;
  int normal_k = 10;
  int knn_k = 5;
};

struct DensifyResult {
  PointCloud fused;              // P_t for the reference frame, in world coordinates
  PoissonResult poisson;
  DenseLabelGrid occupancy;      // V^D: kOccupied / kFree
  DenseLabelGrid labels;         // V^D-hat: semantic ids / kFree
};

/// Separation, aggregation and fusion for one reference frame. Boxes are in
/// the sensor coordinates of their own frame; poses map sensor to world.
/// The result is in world coordinates and carries per-point sensor origins.
inline PointCloud fuse_sequence(std::span<const PointCloud> clouds, std::span<const TrackedBox> boxes,
                                std::span<const RigidTransform> poses, const TrackedBox& ego_box,
                                std::int64_t reference) {
  require(!clouds.empty(), "fuse_sequence: no frames");
  require(reference >= 0 && static_cast<std::size_t>(reference) < poses.size(),
          "fuse_sequence: missing pose for reference frame");
  std::vector<SeparatedFrame> frames;
  frames.reserve(clouds.size());
  for (const auto& c : clouds) {
    std::vector<TrackedBox> at_f;
    for (const auto& b : boxes)
      if (b.frame_id == c.frame_id) at_f.push_back(b);
    TrackedBox ego = ego_box;
    ego.frame_id = c.frame_id;
    frames.push_back(separate_dynamic_static(with_sensor_origins(c), at_f, ego));
  }
  const PointCloud stat = aggregate_static(frames, poses, reference);
  const auto dyn = aggregate_dynamic(frames);
  std::vector<TrackedBox> at_ref;
  for (const auto& b : boxes)
    if (b.frame_id == reference) at_ref.push_back(b);
  PointCloud fused = fuse_frame(stat, dyn, at_ref, reference);
  fused = transformed(fused, poses[static_cast<std::size_t>(reference)]);
  fused.frame_id = reference;
  require(!fused.empty(), "fuse_sequence: fused cloud is empty");
  return fused;
}

/// Poisson reconstruction, voxelization and KNN labelling of a fused cloud
/// (world coordinates, with labels and sensor origins).
inline DensifyResult densify_cloud(PointCloud fused, const VoxelGridSpec& spec, const DensifyOptions& opt) {
  require(fused.has_labels(), "densify: fused cloud has no labels");
  DensifyResult out;
  const OrientedPointCloud oriented = estimate_normals(fused, opt.normal_k);
  out.poisson = poisson_reconstruct(oriented, opt.grid_res);
  out.occupancy = voxelize_mesh(out.poisson.mesh, spec);
  out.labels = knn_assign_labels(out.occupancy, fused, opt.knn_k);
  out.fused = std::move(fused);
  return out;
}

inline DensifyResult densify_sequence(std::span<const PointCloud> clouds, std::span<const TrackedBox> boxes,
                                      std::span<const RigidTransform> poses, const TrackedBox& ego_box,
                                      const VoxelGridSpec& spec, const DensifyOptions& opt) {
  return densify_cloud(fuse_sequence(clouds, boxes, poses, ego_box, opt.reference), spec, opt);
}

/// Fraction of ground-truth surface cells that are occupied in `pred`.
inline double surface_recall(const DenseLabelGrid& gt, const DenseLabelGrid& pred) {
  require(gt.spec == pred.spec, "surface_recall: grid spec mismatch");
  const auto cells = surface_cells(gt);
  require(!cells.empty(), "surface_recall: ground truth has no surface cells");
  std::size_t hit = 0;
  for (const auto& v : cells) hit += pred.occupied(v);
  return static_cast<double>(hit) / static_cast<double>(cells.size());
}

}  // namespace loc
