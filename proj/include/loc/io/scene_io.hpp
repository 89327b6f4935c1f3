#pragma once

// On-disk formats: JSON-lines poses and boxes, OTEN clouds, grids, feature
// maps, embeddings, sparse voxel features and checkpoints, each with a small
// JSON sidecar where the tensor alone is not self-describing.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "loc/config.hpp"
#include "loc/feature_lift.hpp"
#include "loc/io/oten.hpp"
#include "loc/model.hpp"
#include "loc/scene.hpp"
#include "loc/synthetic.hpp"
#include "loc/vocab.hpp"

namespace loc::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open " + path.string());
  try {
    json j;
    is >> j;
    return j;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

inline std::string frame_name(const char* stem, std::int64_t frame, const char* ext = ".oten") {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04lld%s", stem, static_cast<long long>(frame), ext);
  return buf;
}

// ---- poses and boxes -------------------------------------------------------

inline void write_poses(const fs::path& path, const std::vector<RigidTransform>& poses) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ValidationError("cannot write " + path.string());
  for (std::size_t f = 0; f < poses.size(); ++f)
    os << json{{"frame", f}, {"matrix", poses[f].to_matrix()}}.dump() << '\n';
}

template <class F>
void for_each_json_line(const fs::path& path, F&& f) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

/// Poses indexed by frame; frames must be exactly 0..n-1 (any order).
inline std::vector<RigidTransform> read_poses(const fs::path& path) {
  std::map<std::int64_t, RigidTransform> by_frame;
  for_each_json_line(path, [&](const json& j) {
    const auto frame = j.at("frame").get<std::int64_t>();
    const auto m = j.at("matrix").get<std::vector<double>>();
    require(m.size() == 16, "poses: matrix must have 16 entries");
    std::array<double, 16> a{};
    std::copy(m.begin(), m.end(), a.begin());
    require(by_frame.emplace(frame, RigidTransform::from_matrix(a)).second,
            "poses: duplicate frame " + std::to_string(frame));
  });
  std::vector<RigidTransform> out;
  for (const auto& [frame, pose] : by_frame) {
    require(frame == static_cast<std::int64_t>(out.size()), "poses: frames must be 0..n-1");
    out.push_back(pose);
  }
  return out;
}

inline json box_to_json(const TrackedBox& b) {
  const Vec3 size = 2.0 * b.half_extents;
  return {{"frame", b.frame_id},
          {"track_id", b.track_id},
          {"center", {b.center.x(), b.center.y(), b.center.z()}},
          {"size", {size.x(), size.y(), size.z()}},
          {"yaw", b.yaw()}};
}

inline TrackedBox box_from_json(const json& j) {
  return TrackedBox::make(j.at("frame").get<std::int64_t>(), j.at("track_id").get<std::int64_t>(),
                          loc::detail::vec3_of(j.at("center")), loc::detail::vec3_of(j.at("size")),
                          j.at("yaw").get<double>());
}

inline void write_boxes(const fs::path& path, const std::vector<TrackedBox>& boxes) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ValidationError("cannot write " + path.string());
  for (const auto& b : boxes) os << box_to_json(b).dump() << '\n';
}

inline std::vector<TrackedBox> read_boxes(const fs::path& path) {
  std::vector<TrackedBox> out;
  for_each_json_line(path, [&](const json& j) { out.push_back(box_from_json(j)); });
  return out;
}

// ---- clouds and grids ------------------------------------------------------

/// Positions as f64 [N, 3]; labels (if any) as u16 [N] in a second file.
inline void write_cloud(const fs::path& positions_path, const fs::path& labels_path, const PointCloud& c) {
  std::vector<double> xyz;
  xyz.reserve(c.size() * 3);
  for (const auto& p : c.positions) xyz.insert(xyz.end(), {p.x(), p.y(), p.z()});
  write_oten(positions_path, OtenTensor::from(xyz, {c.size(), 3}));
  if (c.labels) {
    std::vector<std::uint16_t> lab(c.labels->begin(), c.labels->end());
    write_oten(labels_path, OtenTensor::from(lab, {c.size()}));
  }
}

inline PointCloud read_cloud(const fs::path& positions_path, const fs::path& labels_path, std::int64_t frame) {
  const OtenTensor t = read_oten(positions_path);
  require(t.dtype == DType::F64 && t.dims.size() == 2 && t.dims[1] == 3,
          "cloud " + positions_path.string() + ": expected f64 [N, 3]");
  const auto v = t.values<double>();
  PointCloud c;
  c.frame_id = frame;
  for (std::size_t i = 0; i < t.dims[0]; ++i) c.positions.emplace_back(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
  if (fs::exists(labels_path)) {
    const OtenTensor l = read_oten(labels_path);
    require(l.dtype == DType::U16 && l.dims.size() == 1 && l.dims[0] == t.dims[0],
            "labels " + labels_path.string() + ": expected u16 [N]");
    const auto lv = l.values<std::uint16_t>();
    c.labels.emplace(lv.begin(), lv.end());
  }
  c.validate();
  return c;
}

/// u8 [H, W, D] in the grid's linear order.
inline OtenTensor grid_tensor(const DenseLabelGrid& g) {
  g.validate();
  std::vector<std::uint8_t> v(g.labels.begin(), g.labels.end());
  return OtenTensor::from(v, {static_cast<std::uint64_t>(g.spec.dim_x), static_cast<std::uint64_t>(g.spec.dim_y),
                              static_cast<std::uint64_t>(g.spec.dim_z)});
}

inline void write_label_grid(const fs::path& path, const DenseLabelGrid& g) { write_oten(path, grid_tensor(g)); }

inline DenseLabelGrid read_label_grid(const fs::path& path, const VoxelGridSpec& spec) {
  const OtenTensor t = read_oten(path);
  require(t.dtype == DType::U8 && t.dims.size() == 3, path.string() + ": expected u8 [H, W, D]");
  require(t.dims[0] == static_cast<std::uint64_t>(spec.dim_x) && t.dims[1] == static_cast<std::uint64_t>(spec.dim_y) &&
              t.dims[2] == static_cast<std::uint64_t>(spec.dim_z),
          path.string() + ": dims do not match the grid");
  DenseLabelGrid g(spec);
  const auto v = t.values<std::uint8_t>();
  g.labels.assign(v.begin(), v.end());
  g.validate();
  return g;
}

/// f32 [H, W, D] per-voxel score grid.
inline void write_score_grid(const fs::path& path, const VoxelGridSpec& spec, const std::vector<double>& scores) {
  require(scores.size() == spec.cell_count(), "write_score_grid: size mismatch");
  std::vector<float> v(scores.begin(), scores.end());
  write_oten(path, OtenTensor::from(v, {static_cast<std::uint64_t>(spec.dim_x), static_cast<std::uint64_t>(spec.dim_y),
                                        static_cast<std::uint64_t>(spec.dim_z)}));
}

// ---- feature maps ----------------------------------------------------------

inline void write_feature_map(const fs::path& path, const FeatureMap& fm) {
  fm.validate();
  write_oten(path, OtenTensor::from(fm.data, {static_cast<std::uint64_t>(fm.height),
                                              static_cast<std::uint64_t>(fm.width),
                                              static_cast<std::uint64_t>(fm.channels)}));
}

inline FeatureMap read_feature_map(const fs::path& path) {
  const OtenTensor t = read_oten(path);
  require(t.dtype == DType::F32 && t.dims.size() == 3, path.string() + ": expected f32 [H, W, C]");
  FeatureMap fm(static_cast<int>(t.dims[1]), static_cast<int>(t.dims[0]), static_cast<int>(t.dims[2]));
  fm.data = t.values<float>();
  fm.validate();
  return fm;
}

// ---- cameras ---------------------------------------------------------------

inline json camera_to_json(const CameraModel& c) {
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height},
          {"world_to_camera", c.world_to_camera.to_matrix()}};
}

inline CameraModel camera_from_json(const json& j) {
  CameraModel c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  const auto m = j.at("world_to_camera").get<std::vector<double>>();
  require(m.size() == 16, "camera: world_to_camera must have 16 entries");
  std::array<double, 16> a{};
  std::copy(m.begin(), m.end(), a.begin());
  c.world_to_camera = RigidTransform::from_matrix(a);
  require(c.is_valid(), "camera: invalid intrinsics or size");
  return c;
}

// ---- embeddings ------------------------------------------------------------

/// f32 [K, C_o] plus a sidecar listing prompts in row order.
inline void write_embeddings(const fs::path& path, const TextEmbeddingSet& set, const ClassVocabulary& vocab) {
  set.validate();
  std::vector<float> v(static_cast<std::size_t>(set.embeddings.size()));
  for (int r = 0; r < set.rows(); ++r)
    for (int c = 0; c < set.dim(); ++c) v[static_cast<std::size_t>(r) * set.dim() + c] = static_cast<float>(set.embeddings(r, c));
  write_oten(path, OtenTensor::from(v, {static_cast<std::uint64_t>(set.rows()), static_cast<std::uint64_t>(set.dim())}));
  write_json(fs::path(path).concat(".json"),
             {{"prompts", set.prompts},
              {"class_ids", set.class_ids},
              {"known_classes", vocab.known_classes},
              {"unknown_set", vocab.unknown_set},
              {"source", set.source == EmbeddingSource::Mock ? "mock" : "clip"},
              {"dim", set.dim()}});
}

struct LoadedEmbeddings {
  TextEmbeddingSet set;
  ClassVocabulary vocab;
};

/// Rows are L2-normalised on load whatever their source.
inline LoadedEmbeddings read_embeddings(const fs::path& path) {
  const OtenTensor t = read_oten(path);
  require(t.dims.size() == 2 && (t.dtype == DType::F32 || t.dtype == DType::F64),
          path.string() + ": expected float [K, C_o]");
  const json side = read_json(fs::path(path).concat(".json"));
  LoadedEmbeddings out;
  try {
    out.set.prompts = side.at("prompts").get<std::vector<std::string>>();
    out.set.class_ids = side.at("class_ids").get<std::vector<int>>();
    out.vocab.known_classes = side.at("known_classes").get<std::vector<std::string>>();
    if (side.contains("unknown_set")) out.vocab.unknown_set = side.at("unknown_set").get<std::vector<std::string>>();
    const auto src = side.value("source", std::string("clip"));
    require(src == "clip" || src == "mock", "embeddings: source must be clip|mock");
    out.set.source = src == "mock" ? EmbeddingSource::Mock : EmbeddingSource::Clip;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ".json: " + e.what());
  }
  const auto K = t.dims[0], C = t.dims[1];
  require(out.set.prompts.size() == K && out.set.class_ids.size() == K, "embeddings: sidecar rows != tensor rows");
  const auto v = t.as_double();
  out.set.embeddings.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(C));
  for (std::size_t r = 0; r < K; ++r)
    for (std::size_t c = 0; c < C; ++c) out.set.embeddings(r, c) = v[r * C + c];
  out.set.normalize_rows();
  for (std::size_t r = 0; r < K; ++r) {
    const int ci = out.set.class_ids[r];
    require(ci >= 0 && ci < static_cast<int>(out.vocab.known_classes.size()), "embeddings: class id out of range");
    out.vocab.prompts.push_back({ci, out.set.prompts[r]});
  }
  out.set.validate();
  return out;
}

// ---- sparse voxel features -------------------------------------------------

/// f64 [N, 4 + C_o] rows (i, j, k, count, feature...) in voxel order, plus a
/// sidecar with the grid and pooling mode.
inline void write_sparse_features(const fs::path& path, const SparseVoxelFeatures& f, PoolMode mode) {
  const std::size_t width = 4 + static_cast<std::size_t>(f.channels);
  std::vector<double> v;
  v.reserve(f.size() * width);
  for (const auto& [cell, e] : f.entries) {
    v.insert(v.end(), {static_cast<double>(cell.i), static_cast<double>(cell.j), static_cast<double>(cell.k),
                       static_cast<double>(e.count)});
    v.insert(v.end(), e.feature.data(), e.feature.data() + e.feature.size());
  }
  write_oten(path, OtenTensor::from(v, {f.size(), width}));
  write_json(fs::path(path).concat(".json"),
             {{"grid", grid_to_json(f.spec)}, {"channels", f.channels}, {"pooling", to_string(mode)}});
}

inline SparseVoxelFeatures read_sparse_features(const fs::path& path) {
  const json side = read_json(fs::path(path).concat(".json"));
  SparseVoxelFeatures f;
  f.spec = grid_from_json(side.at("grid"));
  f.channels = side.at("channels").get<int>();
  const OtenTensor t = read_oten(path);
  require(t.dtype == DType::F64 && t.dims.size() == 2 && t.dims[1] == 4 + static_cast<std::uint64_t>(f.channels),
          path.string() + ": expected f64 [N, 4 + C_o]");
  const auto v = t.values<double>();
  const std::size_t width = t.dims[1];
  for (std::size_t r = 0; r < t.dims[0]; ++r) {
    const double* row = v.data() + r * width;
    const VoxelIndex cell{static_cast<int>(row[0]), static_cast<int>(row[1]), static_cast<int>(row[2])};
    require(f.spec.contains(cell), "sparse features: cell outside grid");
    SparseVoxelEntry e;
    e.count = static_cast<int>(row[3]);
    require(e.count >= 1, "sparse features: count must be >= 1");
    e.feature = Eigen::Map<const Eigen::VectorXd>(row + 4, f.channels);
    require(f.entries.emplace(cell, std::move(e)).second, "sparse features: duplicate cell");
  }
  return f;
}

// ---- checkpoints -----------------------------------------------------------

/// One f64 OTEN per parameter block plus manifest.json with layer shapes.
inline void write_checkpoint(const fs::path& dir, const DualHeadModel& model, const json& extra = json::object()) {
  fs::create_directories(dir);
  json layers = json::array();
  auto dump = [&](const std::string& part, const Mlp& m) {
    json widths = json::array();
    widths.push_back(m.in_width());
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      const auto& lin = m.layers[l];
      widths.push_back(lin.out_width());
      const std::string stem = part + "." + std::to_string(l);
      std::vector<double> w(static_cast<std::size_t>(lin.weight.size()));
      for (int r = 0; r < lin.in_width(); ++r)
        for (int c = 0; c < lin.out_width(); ++c) w[static_cast<std::size_t>(r) * lin.out_width() + c] = lin.weight(r, c);
      write_oten(dir / (stem + ".weight.oten"),
                 OtenTensor::from(w, {static_cast<std::uint64_t>(lin.in_width()), static_cast<std::uint64_t>(lin.out_width())}));
      std::vector<double> b(lin.bias.data(), lin.bias.data() + lin.bias.size());
      write_oten(dir / (stem + ".bias.oten"), OtenTensor::from(b, {static_cast<std::uint64_t>(lin.out_width())}));
    }
    layers.push_back({{"name", part},
                      {"widths", widths},
                      {"activation", to_string(m.activation)},
                      {"beta", m.beta},
                      {"activate_output", m.activate_output}});
  };
  dump("feature_net", model.feature_net);
  dump("occ_head", model.occ_head);
  dump("lang_head", model.lang_head);
  write_json(dir / "manifest.json", {{"format", "loc-checkpoint"}, {"version", 1}, {"parts", layers}, {"extra", extra}});
}

struct LoadedCheckpoint {
  DualHeadModel model;
  json extra;
};

inline LoadedCheckpoint read_checkpoint(const fs::path& dir) {
  const json man = read_json(dir / "manifest.json");
  require(man.value("format", std::string()) == "loc-checkpoint", "checkpoint: bad manifest format");
  LoadedCheckpoint out;
  std::map<std::string, Mlp*> parts = {{"feature_net", &out.model.feature_net},
                                       {"occ_head", &out.model.occ_head},
                                       {"lang_head", &out.model.lang_head}};
  for (const auto& p : man.at("parts")) {
    const auto name = p.at("name").get<std::string>();
    require(parts.count(name) == 1, "checkpoint: unknown part " + name);
    Mlp& m = *parts[name];
    m.activation = parse_activation(p.at("activation").get<std::string>());
    m.beta = p.at("beta").get<double>();
    m.activate_output = p.at("activate_output").get<bool>();
    const auto widths = p.at("widths").get<std::vector<int>>();
    require(widths.size() >= 2, "checkpoint: part needs at least one layer");
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const std::string stem = name + "." + std::to_string(l);
      const OtenTensor w = read_oten(dir / (stem + ".weight.oten"));
      const OtenTensor b = read_oten(dir / (stem + ".bias.oten"));
      require(w.dims == std::vector<std::uint64_t>{static_cast<std::uint64_t>(widths[l]),
                                                   static_cast<std::uint64_t>(widths[l + 1])},
              "checkpoint: weight shape mismatch for " + stem);
      require(b.dims == std::vector<std::uint64_t>{static_cast<std::uint64_t>(widths[l + 1])},
              "checkpoint: bias shape mismatch for " + stem);
      Linear lin{MatrixXd(widths[l], widths[l + 1]), VectorXd(widths[l + 1])};
      const auto wv = w.values<double>(), bv = b.values<double>();
      for (int r = 0; r < widths[l]; ++r)
        for (int c = 0; c < widths[l + 1]; ++c) lin.weight(r, c) = wv[static_cast<std::size_t>(r) * widths[l + 1] + c];
      for (int c = 0; c < widths[l + 1]; ++c) lin.bias(c) = bv[c];
      m.layers.push_back(std::move(lin));
    }
  }
  for (const auto& [name, m] : parts) require(!m->layers.empty(), "checkpoint: missing part " + name);
  out.model.validate();
  out.extra = man.value("extra", json::object());
  return out;
}

}  // namespace loc::io

namespace loc::io {

// ---- scene directories -----------------------------------------------------

/// Everything a pipeline run reads from a scene directory.
struct SceneData {
  VoxelGridSpec spec;
  std::vector<PointCloud> clouds;
  std::vector<TrackedBox> boxes;
  std::vector<RigidTransform> poses;
  std::vector<CameraModel> cameras;
  TrackedBox ego_box;
  std::optional<DenseLabelGrid> ground_truth;
  std::vector<FeatureMap> feature_maps;  // one per camera, may be empty
  std::vector<ClassId> classes;          // semantic classes present in the scene
};

inline SceneData scene_data_of(const SyntheticScene& s, std::vector<FeatureMap> feature_maps = {}) {
  SceneData d;
  d.spec = s.spec;
  d.clouds = s.clouds;
  d.boxes = s.boxes;
  d.poses = s.poses;
  d.cameras = s.cameras;
  d.ego_box = s.ego_box;
  d.ground_truth = s.ground_truth;
  d.feature_maps = std::move(feature_maps);
  std::set<ClassId> present;
  for (ClassId c : s.ground_truth.labels)
    if (is_semantic(c)) present.insert(c);
  d.classes.assign(present.begin(), present.end());
  return d;
}

inline void write_scene(const fs::path& dir, const SceneData& d) {
  fs::create_directories(dir);
  json cams = json::array(), maps = json::array();
  for (const auto& c : d.cameras) cams.push_back(camera_to_json(c));
  for (std::size_t i = 0; i < d.feature_maps.size(); ++i) {
    const std::string name = frame_name("feature", static_cast<std::int64_t>(i));
    write_feature_map(dir / name, d.feature_maps[i]);
    maps.push_back(name);
  }
  json scene = {{"version", 1},
                {"grid", grid_to_json(d.spec)},
                {"frames", d.clouds.size()},
                {"ego_box", box_to_json(d.ego_box)},
                {"cameras", cams},
                {"feature_maps", maps},
                {"classes", d.classes},
                {"ground_truth", d.ground_truth ? json("gt_labels.oten") : json(nullptr)}};
  write_json(dir / "scene.json", scene);
  write_poses(dir / "poses.jsonl", d.poses);
  write_boxes(dir / "boxes.jsonl", d.boxes);
  for (const auto& c : d.clouds)
    write_cloud(dir / frame_name("cloud", c.frame_id), dir / frame_name("labels", c.frame_id), c);
  if (d.ground_truth) write_label_grid(dir / "gt_labels.oten", *d.ground_truth);
}

inline SceneData read_scene(const fs::path& dir) {
  const json j = read_json(dir / "scene.json");
  SceneData d;
  try {
    require(j.value("version", 0) == 1, "scene.json: unsupported version");
    d.spec = grid_from_json(j.at("grid"));
    const auto frames = j.at("frames").get<std::int64_t>();
    require(frames >= 0, "scene.json: negative frame count");
    d.ego_box = box_from_json(j.at("ego_box"));
    for (const auto& c : j.at("cameras")) d.cameras.push_back(camera_from_json(c));
    for (const auto& m : j.at("feature_maps")) d.feature_maps.push_back(read_feature_map(dir / m.get<std::string>()));
    d.classes = j.at("classes").get<std::vector<ClassId>>();
    d.poses = read_poses(dir / "poses.jsonl");
    d.boxes = read_boxes(dir / "boxes.jsonl");
    for (std::int64_t f = 0; f < frames; ++f)
      d.clouds.push_back(read_cloud(dir / frame_name("cloud", f), dir / frame_name("labels", f), f));
    if (!j.at("ground_truth").is_null())
      d.ground_truth = read_label_grid(dir / j.at("ground_truth").get<std::string>(), d.spec);
  } catch (const json::exception& e) {
    throw ValidationError("scene.json: " + std::string(e.what()));
  }
  require(d.poses.size() >= d.clouds.size(), "scene: fewer poses than frames");
  require(d.feature_maps.empty() || d.feature_maps.size() == d.cameras.size(),
          "scene: feature map count != camera count");
  return d;
}

}  // namespace loc::io
