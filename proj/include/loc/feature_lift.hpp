#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "loc/error.hpp"
#include "loc/geometry.hpp"
#include "loc/scene.hpp"

namespace loc {

using Feature = Eigen::VectorXd;

/// Per-pixel feature image, height x width x channels, channel fastest.
struct FeatureMap {
  int width = 0, height = 0, channels = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {
    require(w > 0 && h > 0 && c > 0, "FeatureMap: dimensions must be positive");
  }

  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width + x) * channels;
  }
  float* pixel(int x, int y) { return data.data() + offset(x, y); }
  const float* pixel(int x, int y) const { return data.data() + offset(x, y); }

  void validate() const {
    require(width > 0 && height > 0 && channels > 0, "FeatureMap: dimensions must be positive");
    require(data.size() == static_cast<std::size_t>(width) * height * channels,
            "FeatureMap: data size mismatch");
    for (float f : data) require(std::isfinite(f), "FeatureMap: non-finite value");
  }
};

enum class PoolMode { Mean, Max };

inline std::string to_string(PoolMode m) { return m == PoolMode::Mean ? "mean" : "max"; }
inline PoolMode parse_pool_mode(const std::string& s) {
  if (s == "mean") return PoolMode::Mean;
  if (s == "max") return PoolMode::Max;
  throw ValidationError("unknown pooling mode: " + s);
}

struct Projection {
  double u = 0, v = 0, depth = 0;
};

/// Pinhole projection; rejects points at depth <= 1e-6 and outside
/// [0, width-1] x [0, height-1].
inline std::optional<Projection> project_point(const Vec3& p, const CameraModel& cam) {
  const Vec3 pc = cam.world_to_camera.apply(p);
  if (!(pc.z() > 1e-6)) return std::nullopt;
  const double u = cam.fx * pc.x() / pc.z() + cam.cx;
  const double v = cam.fy * pc.y() / pc.z() + cam.cy;
  if (!(u >= 0.0 && v >= 0.0 && u <= cam.width - 1 && v <= cam.height - 1)) return std::nullopt;
  return Projection{u, v, pc.z()};
}

inline Feature bilinear_sample(const FeatureMap& fm, double u, double v) {
  if (!(u >= 0.0 && v >= 0.0 && u <= fm.width - 1 && v <= fm.height - 1))
    throw ValidationError("bilinear_sample: coordinates outside the feature map");
  const int x0 = std::min(static_cast<int>(std::floor(u)), std::max(fm.width - 2, 0));
  const int y0 = std::min(static_cast<int>(std::floor(v)), std::max(fm.height - 2, 0));
  const int x1 = std::min(x0 + 1, fm.width - 1);
  const int y1 = std::min(y0 + 1, fm.height - 1);
  const double ax = u - x0, ay = v - y0;
  const double w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay), w01 = (1 - ax) * ay, w11 = ax * ay;
  const float* p00 = fm.pixel(x0, y0);
  const float* p10 = fm.pixel(x1, y0);
  const float* p01 = fm.pixel(x0, y1);
  const float* p11 = fm.pixel(x1, y1);
  Feature out(fm.channels);
  for (int c = 0; c < fm.channels; ++c)
    out[c] = w00 * p00[c] + w10 * p10[c] + w01 * p01[c] + w11 * p11[c];
  return out;
}

inline Feature pool_features(std::span<const Feature> vectors, PoolMode mode) {
  require(!vectors.empty(), "pool_features: empty input");
  const auto n = vectors.front().size();
  Feature acc = vectors.front();
  for (std::size_t i = 1; i < vectors.size(); ++i) {
    require(vectors[i].size() == n, "pool_features: length mismatch");
    if (mode == PoolMode::Mean)
      acc += vectors[i];
    else
      acc = acc.cwiseMax(vectors[i]);
  }
  if (mode == PoolMode::Mean) acc /= static_cast<double>(vectors.size());
  return acc;
}

struct SparseVoxelEntry {
  Feature feature;
  int count = 0;
};

/// V_psi: sparse voxel -> pooled C_o feature.
struct SparseVoxelFeatures {
  VoxelGridSpec spec;
  int channels = 0;
  std::map<VoxelIndex, SparseVoxelEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  const SparseVoxelEntry* find(const VoxelIndex& v) const {
    auto it = entries.find(v);
    return it == entries.end() ? nullptr : &it->second;
  }
};

struct CameraView {
  CameraModel camera;
  FeatureMap features;
};

/// Per point: pool over the cameras that see it. Per voxel: pool over its
/// points. Contributions are sorted before pooling so the result does not
/// depend on point order.
inline SparseVoxelFeatures build_sparse_voxel_features(const PointCloud& cloud,
                                                       std::span<const CameraView> views,
                                                       const VoxelGridSpec& spec,
                                                       PoolMode mode = PoolMode::Mean) {
  require(!views.empty(), "build_sparse_voxel_features: at least one camera required");
  spec.validate();
  const int channels = views.front().features.channels;
  for (const auto& v : views) {
    require(v.camera.is_valid(), "build_sparse_voxel_features: invalid camera");
    require(v.features.channels == channels, "build_sparse_voxel_features: channel mismatch");
  }

  std::map<VoxelIndex, std::vector<Feature>> per_voxel;
  std::vector<Feature> per_view;
  for (const Vec3& p : cloud.positions) {
    const auto cell = voxel_of(spec, p);
    if (!cell) continue;
    per_view.clear();
    for (const auto& view : views) {
      auto proj = project_point(p, view.camera);
      if (!proj) continue;
      double su = proj->u, sv = proj->v;
      // Feature maps coarser than the image are sampled in map pixel units.
      if (view.features.width != view.camera.width)
        su *= static_cast<double>(view.features.width - 1) / std::max(view.camera.width - 1, 1);
      if (view.features.height != view.camera.height)
        sv *= static_cast<double>(view.features.height - 1) / std::max(view.camera.height - 1, 1);
      per_view.push_back(bilinear_sample(view.features, su, sv));
    }
    if (per_view.empty()) continue;
    per_voxel[*cell].push_back(pool_features(per_view, mode));
  }

  SparseVoxelFeatures out;
  out.spec = spec;
  out.channels = channels;
  auto lex_less = [](const Feature& a, const Feature& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  };
  for (auto& [cell, feats] : per_voxel) {
    std::sort(feats.begin(), feats.end(), lex_less);
    out.entries.emplace(cell, SparseVoxelEntry{pool_features(feats, mode), static_cast<int>(feats.size())});
  }
  return out;
}

}  // namespace loc
