#pragma once

// Deterministic desk-scale driving scene: a floor, static objects, one
// constant-velocity tracked car, an ego vehicle with per-frame poses, and
// ego-mounted cameras. Objects are boxes whose faces lie on voxel mid-planes,
// so every sampled surface point falls inside an occupied ground-truth cell.
// Only faces turned towards the sensor return points; there is no occlusion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "loc/classes.hpp"
#include "loc/error.hpp"
#include "loc/feature_lift.hpp"
#include "loc/geometry.hpp"
#include "loc/random.hpp"
#include "loc/scene.hpp"
#include "loc/vocab.hpp"

namespace loc {

struct SceneObject {
  ClassId label = 0;
  int track_id = -1;  // -1 for static objects
  VoxelIndex lo, hi;  // inclusive ground-truth cell range at frame 0
  Vec3 min, max;      // continuous extent at frame 0
};

struct SyntheticSceneConfig {
  int points_per_frame = 600;
  double dt = 0.1;                            // seconds per frame
  Vec3 object_velocity{5.0, 0.0, 0.0};        // m/s, moving car
  Vec3 ego_velocity{5.0, 0.0, 0.0};           // m/s
  double ego_yaw_rate = 0.1;                  // rad/s
  Vec3 ego_box_size{4.0, 2.0, 2.0};
  double sensor_height = 1.5;                 // above the floor plane
  int ego_returns = 16;
  int image_width = 64, image_height = 48;
  bool include_unknown_object = true;
  bool include_parked_car = true;             // false: only the moving car remains
  ClassId unknown_class = 5;                  // construction vehicle
};

struct SyntheticScene {
  VoxelGridSpec spec;
  SyntheticSceneConfig config;
  std::vector<PointCloud> clouds;     // labelled, in each frame's sensor coordinates
  std::vector<TrackedBox> boxes;      // in the sensor coordinates of their frame
  std::vector<RigidTransform> poses;  // sensor(frame) -> world
  std::vector<CameraModel> cameras;   // world -> camera, mounted on the frame-0 ego
  DenseLabelGrid ground_truth;        // world coordinates, objects at frame 0
  TrackedBox ego_box;                 // sensor coordinates
  std::vector<SceneObject> objects;

  int frame_count() const { return static_cast<int>(clouds.size()); }

  /// Box of `track` at `frame`, in world coordinates.
  std::optional<TrackedBox> box_in_world(std::int64_t frame, std::int64_t track) const {
    for (const auto& b : boxes)
      if (b.frame_id == frame && b.track_id == track) {
        TrackedBox w = b;
        w.pose = compose(poses[static_cast<std::size_t>(frame)], b.pose);
        w.center = w.pose.translation;
        return w;
      }
    return std::nullopt;
  }

  /// Known semantic classes present in the ground truth (excluding the unknown object).
  std::vector<ClassId> known_labels() const {
    std::vector<ClassId> out;
    for (ClassId c : {ClassId{11}, ClassId{4}, ClassId{15}, ClassId{16}}) out.push_back(c);
    return out;
  }
};

namespace detail {

struct Rect {
  Vec3 corner, edge_u, edge_v;
  Vec3 normal;  // outward
  ClassId label;
  int owner;  // object index, -1 for floor
  double area() const { return edge_u.cross(edge_v).norm(); }
};

inline bool strictly_inside(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  return (p.array() > lo.array()).all() && (p.array() < hi.array()).all();
}

}  // namespace detail

inline SyntheticScene generate_synthetic_scene(std::uint64_t seed, int n_frames,
                                               const VoxelGridSpec& spec,
                                               const SyntheticSceneConfig& cfg = {}) {
  spec.validate();
  require(n_frames >= 1, "generate_synthetic_scene: n_frames must be >= 1");
  require(spec.dim_x >= 12 && spec.dim_y >= 12 && spec.dim_z >= 6,
          "generate_synthetic_scene: grid must be at least 12 x 12 x 6 cells");
  require(cfg.points_per_frame > 0 && cfg.dt > 0, "generate_synthetic_scene: bad config");

  Rng rng(seed);
  SyntheticScene scene;
  scene.spec = spec;
  scene.config = cfg;
  const double s = spec.voxel_size;
  const double sx = spec.dim_x / 16.0, sy = spec.dim_y / 16.0;

  // Layout on a 16 x 16 footprint, scaled to the grid; static objects jitter by
  // up to one cell along x per seed.
  struct Proto { ClassId label; int track; int i0, i1, j0, j1, k1; bool jitter; };
  std::vector<Proto> protos = {
      {15, -1, 0, 15, 14, 15, 5, false},  // building along the far edge
      {16, -1, 2, 3, 2, 3, 4, true},      // tree
      {16, -1, 11, 12, 2, 3, 4, true},    // tree
      {4, -1, 6, 9, 2, 3, 1, true},       // parked car
      {4, 1, 1, 4, 10, 11, 1, false},     // moving car
  };
  if (cfg.include_unknown_object) protos.push_back({cfg.unknown_class, -1, 11, 13, 10, 11, 2, true});

  for (const auto& p : protos) {
    const int shift = p.jitter ? rng.uniform_int(-1, 1) : 0;
    // the draw above still happens so the other objects keep their jitter
    if (p.label == 4 && p.track < 0 && !cfg.include_parked_car) continue;
    auto scale = [](int a, double f) { return static_cast<int>(std::floor(a * f)); };
    SceneObject o;
    o.label = p.label;
    o.track_id = p.track;
    o.lo = {scale(p.i0 + shift, sx), scale(p.j0, sy), 0};
    o.hi = {std::max(o.lo.i + 1, scale(p.i1 + shift + 1, sx) - 1),
            std::max(o.lo.j + 1, scale(p.j1 + 1, sy) - 1), std::min(p.k1, spec.dim_z - 1)};
    o.min = spec.origin + s * Vec3(o.lo.i + 0.5, o.lo.j + 0.5, 0.5);
    o.max = spec.origin + s * Vec3(o.hi.i + 0.5, o.hi.j + 0.5, o.hi.k + 0.5);
    scene.objects.push_back(o);
  }

  // Ground truth at frame 0.
  scene.ground_truth = DenseLabelGrid(spec, kFree);
  for (int i = 0; i < spec.dim_x; ++i)
    for (int j = 0; j < spec.dim_y; ++j) scene.ground_truth.at({i, j, 0}) = 11;  // drivable surface
  for (const auto& o : scene.objects)
    for (int i = o.lo.i; i <= o.hi.i; ++i)
      for (int j = o.lo.j; j <= o.hi.j; ++j)
        for (int k = o.lo.k; k <= o.hi.k; ++k) scene.ground_truth.at({i, j, k}) = o.label;

  // Ego trajectory along the free lane between the car rows and the building.
  const double floor_z = spec.origin.z() + 0.5 * s;
  const Vec3 ego0 = spec.origin + Vec3(3.0 * sx * s, 7.5 * sy * s, 0.0) + Vec3(0, 0, 0.5 * s + cfg.sensor_height);
  scene.ego_box = TrackedBox::make(0, -1, Vec3::Zero(), cfg.ego_box_size, 0.0);
  for (int f = 0; f < n_frames; ++f) {
    const double t = f * cfg.dt;
    scene.poses.push_back(RigidTransform::from_yaw(cfg.ego_yaw_rate * t, ego0 + cfg.ego_velocity * t));
  }

  // Cameras on the frame-0 ego, looking front/left/back/right.
  for (int c = 0; c < 4; ++c) {
    const double yaw = c * M_PI / 2.0;
    Mat3 mount;  // camera axes (x right, y down, z forward) in sensor coordinates
    mount.col(0) = Vec3(std::sin(yaw), -std::cos(yaw), 0.0);
    mount.col(1) = Vec3(0.0, 0.0, -1.0);
    mount.col(2) = Vec3(std::cos(yaw), std::sin(yaw), 0.0);
    const RigidTransform cam_to_world = compose(scene.poses[0], RigidTransform{mount, Vec3::Zero()});
    CameraModel cam;
    cam.width = cfg.image_width;
    cam.height = cfg.image_height;
    cam.fx = cam.fy = 0.5 * cfg.image_width;  // 90 degree horizontal field of view
    cam.cx = 0.5 * (cfg.image_width - 1);
    cam.cy = 0.5 * (cfg.image_height - 1);
    cam.world_to_camera = invert(cam_to_world);
    scene.cameras.push_back(cam);
  }

  for (int f = 0; f < n_frames; ++f) {
    const Vec3 shift = cfg.object_velocity * (f * cfg.dt);
    std::vector<Vec3> omin, omax;
    for (const auto& o : scene.objects) {
      const Vec3 d = o.track_id >= 0 ? shift : Vec3::Zero();
      omin.push_back(o.min + d);
      omax.push_back(o.max + d);
    }

    std::vector<detail::Rect> rects;
    const Vec3 lo = spec.origin, ext = spec.extent();
    rects.push_back({Vec3(lo.x(), lo.y(), floor_z), Vec3(ext.x(), 0, 0), Vec3(0, ext.y(), 0), Vec3::UnitZ(), 11, -1});
    for (std::size_t n = 0; n < scene.objects.size(); ++n) {
      const Vec3 a = omin[n], b = omax[n], d = b - a;
      const ClassId l = scene.objects[n].label;
      const int own = static_cast<int>(n);
      rects.push_back({Vec3(a.x(), a.y(), b.z()), Vec3(d.x(), 0, 0), Vec3(0, d.y(), 0), Vec3::UnitZ(), l, own});
      rects.push_back({a, Vec3(d.x(), 0, 0), Vec3(0, 0, d.z()), -Vec3::UnitY(), l, own});
      rects.push_back({Vec3(a.x(), b.y(), a.z()), Vec3(d.x(), 0, 0), Vec3(0, 0, d.z()), Vec3::UnitY(), l, own});
      rects.push_back({a, Vec3(0, d.y(), 0), Vec3(0, 0, d.z()), -Vec3::UnitX(), l, own});
      rects.push_back({Vec3(b.x(), a.y(), a.z()), Vec3(0, d.y(), 0), Vec3(0, 0, d.z()), Vec3::UnitX(), l, own});
    }
    std::vector<double> cumulative;
    double total = 0.0;
    for (const auto& r : rects) cumulative.push_back(total += r.area());

    const RigidTransform world_to_sensor = invert(scene.poses[f]);
    const Vec3 sensor_world = scene.poses[f].translation;
    const Vec3 ego_half = 0.5 * cfg.ego_box_size;
    auto hidden = [&](const Vec3& q, int owner) {
      for (std::size_t n = 0; n < omin.size(); ++n) {
        if (static_cast<int>(n) == owner) continue;
        if (owner < 0) {
          // Floor under an object or under the ego vehicle is not observed.
          if (q.x() > omin[n].x() && q.x() < omax[n].x() && q.y() > omin[n].y() && q.y() < omax[n].y())
            return true;
        } else if (detail::strictly_inside(q, omin[n], omax[n])) {
          return true;
        }
      }
      if (owner < 0) {
        const Vec3 local = world_to_sensor.apply(q);
        if (std::abs(local.x()) < ego_half.x() && std::abs(local.y()) < ego_half.y()) return true;
      }
      return false;
    };

    PointCloud cloud;
    cloud.frame_id = f;
    cloud.labels.emplace();
    for (int n = 0; n < cfg.points_per_frame; ++n) {
      for (int attempt = 0; attempt < 1000; ++attempt) {
        const double pick = rng.uniform() * total;
        const auto r = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin(),
                                     static_cast<std::ptrdiff_t>(rects.size()) - 1));
        const Vec3 q = rects[r].corner + rng.uniform() * rects[r].edge_u + rng.uniform() * rects[r].edge_v;
        // A LiDAR only returns from surfaces facing it.
        if (rects[r].normal.dot(sensor_world - q) <= 0.0) continue;
        if (hidden(q, rects[r].owner)) continue;
        cloud.push_back(world_to_sensor.apply(q), rects[r].label);
        break;
      }
    }
    // Returns from the ego vehicle's own roof.
    for (int n = 0; n < cfg.ego_returns; ++n) {
      const Vec3 q(rng.uniform(-ego_half.x(), ego_half.x()), rng.uniform(-ego_half.y(), ego_half.y()), ego_half.z());
      cloud.push_back(q, 0);
    }
    scene.clouds.push_back(std::move(cloud));

    for (std::size_t n = 0; n < scene.objects.size(); ++n) {
      const auto& o = scene.objects[n];
      if (o.track_id < 0) continue;
      // Annotated box: slightly padded, bottom lifted off the floor plane.
      const Vec3 bmin = omin[n] - Vec3(0.02, 0.02, -1e-6), bmax = omax[n] + Vec3(0.02, 0.02, 0.02);
      const Vec3 center_world = 0.5 * (bmin + bmax);
      TrackedBox box = TrackedBox::make(f, o.track_id, center_world, bmax - bmin, 0.0);
      box.pose = compose(world_to_sensor, box.pose);
      box.center = box.pose.translation;
      scene.boxes.push_back(box);
    }
  }
  return scene;
}

/// Feature vectors standing in for per-pixel vision-language features: each
/// known class gets its prompt prototype; unknown classes and the background
/// get extra rows orthogonal to all prompts.
struct MockClassFeatures {
  std::map<ClassId, Feature> by_class;
  Feature background;
};

inline MockClassFeatures mock_class_features(const ClassVocabulary& vocab,
                                             const std::vector<ClassId>& unknown_classes,
                                             int dim, std::uint64_t seed) {
  const int k = vocab.prompt_count();
  const Eigen::MatrixXd rows = mock_unit_vectors(k + static_cast<int>(unknown_classes.size()) + 1, dim, seed);
  MockClassFeatures out;
  for (int c = 0; c < vocab.class_count(); ++c) {
    Feature acc = Feature::Zero(dim);
    for (int r = 0; r < k; ++r)
      if (vocab.prompts[r].class_index == c) acc += rows.row(r).transpose();
    const auto id = class_id_of(vocab.known_classes[c]);
    require(id.has_value(), "mock_class_features: unknown class name " + vocab.known_classes[c]);
    out.by_class[*id] = acc.normalized();
  }
  for (std::size_t u = 0; u < unknown_classes.size(); ++u)
    out.by_class[unknown_classes[u]] = rows.row(k + static_cast<int>(u)).transpose();
  out.background = rows.row(rows.rows() - 1).transpose();
  return out;
}

/// Ray-marches the label grid from the camera centre; each pixel takes the
/// feature of the first occupied cell (background if none), plus Gaussian noise.
inline FeatureMap render_feature_map(const DenseLabelGrid& grid, const CameraModel& cam,
                                     const MockClassFeatures& features, double noise_sigma,
                                     std::uint64_t seed) {
  const int dim = static_cast<int>(features.background.size());
  FeatureMap fm(cam.width, cam.height, dim);
  Rng rng(seed);
  const RigidTransform cam_to_world = invert(cam.world_to_camera);
  const double step = 0.1 * grid.spec.voxel_size;
  const double max_range = grid.spec.extent().norm() * 1.5;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 dir = (cam_to_world.rotation * Vec3((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0)).normalized();
      const Feature* f = &features.background;
      for (double t = step; t < max_range; t += step) {
        const auto cell = voxel_of(grid.spec, cam_to_world.translation + t * dir);
        if (!cell) continue;
        const ClassId c = grid.at(*cell);
        if (c == kFree) continue;
        if (auto it = features.by_class.find(c); it != features.by_class.end()) f = &it->second;
        break;
      }
      float* px = fm.pixel(x, y);
      for (int c = 0; c < dim; ++c) px[c] = static_cast<float>((*f)[c] + noise_sigma * rng.normal());
    }
  return fm;
}

}  // namespace loc
