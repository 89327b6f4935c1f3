#pragma once

// Run configuration: one JSON document, every field optional. Command-line
// flags are applied on top by the tool.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "loc/error.hpp"
#include "loc/feature_lift.hpp"
#include "loc/geometry.hpp"
#include "loc/model.hpp"
#include "loc/openset.hpp"
#include "loc/train.hpp"
#include "loc/vocab.hpp"

namespace loc {

struct RunConfig {
  VoxelGridSpec grid{Vec3::Zero(), 1.0, 16, 16, 16};
  int frames = 10;
  int points_per_frame = 600;
  std::int64_t reference_frame = 0;
  std::uint64_t seed = 0;
  bool parked_car = true;

  int embed_dim = 768;  // C_o
  PoolMode pooling = PoolMode::Mean;
  double feature_noise = 0.05;

  int poisson_grid_res = 64;
  int normal_k = 10;
  int knn_k = 5;

  std::vector<std::string> unknown_set{"construction vehicle"};
  PromptStyle prompt_style = PromptStyle::C;
  bool grouped_classes = true;  // false: every class is its own single fine name

  int feature_width = 64;  // C_v
  int hidden_width = 64;
  Activation activation = Activation::Softplus;
  TrainConfig train;
  bool supervise_with_gt = true;

  OpenSetConfig openset;
  std::vector<double> delta_sweep{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

  RunConfig() { train.loss.tau1 = train.loss.tau2 = 0.5; }

  void validate() const {
    grid.validate();
    require(frames >= 1, "config: frames must be >= 1");
    require(points_per_frame > 0, "config: points_per_frame must be > 0");
    require(reference_frame >= 0 && reference_frame < frames, "config: reference_frame out of range");
    require(embed_dim > 0, "config: embed_dim must be > 0");
    require(feature_noise >= 0, "config: feature_noise must be >= 0");
    require(poisson_grid_res >= 8, "config: poisson_grid_res must be >= 8");
    require(normal_k >= 3, "config: normal_k must be >= 3");
    require(knn_k >= 1, "config: knn_k must be >= 1");
    require(feature_width > 0 && hidden_width > 0, "config: layer widths must be > 0");
    train.validate();
    require(openset.tau2 > 0 && openset.mcm_temperature > 0, "config: temperatures must be > 0");
    for (double d : delta_sweep) require(std::isfinite(d), "config: non-finite delta");
    for (const auto& n : unknown_set)
      require(class_id_of(n).has_value() && n != "free", "config: unknown class name '" + n + "'");
  }

  /// The scene's semantic classes minus the unknown set, in id order.
  std::vector<std::string> known_class_names(const std::vector<ClassId>& present) const {
    std::vector<std::string> out;
    for (ClassId c : present) {
      const std::string n = class_name_of(c);
      if (std::find(unknown_set.begin(), unknown_set.end(), n) == unknown_set.end()) out.push_back(n);
    }
    return out;
  }

  ClassVocabulary vocabulary(const std::vector<std::string>& classes) const {
    if (grouped_classes) return build_prompts(classes, prompt_style, unknown_set);
    std::map<std::string, std::vector<std::string>> identity;
    for (const auto& c : classes) identity[c] = {c};
    return build_prompts(classes, prompt_style, unknown_set, identity);
  }

  std::vector<ClassId> unknown_ids() const {
    std::vector<ClassId> out;
    for (const auto& n : unknown_set) {
      const auto id = class_id_of(n);
      require(id.has_value(), "config: unknown class name '" + n + "'");
      out.push_back(*id);
    }
    return out;
  }
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline Vec3 vec3_of(const nlohmann::json& j) {
  require(j.is_array() && j.size() == 3, "expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "grid", "frames", "points_per_frame", "reference_frame", "seed", "parked_car", "embed_dim", "pooling",
      "feature_noise", "poisson_grid_res", "normal_k", "knn_k", "unknown_set", "prompt_style",
      "group_b", "feature_width", "hidden_width", "activation", "lambda1", "lambda2", "tau1", "tau2",
      "epochs", "batch_size", "lr", "weight_decay", "clip_norm", "beta1", "beta2", "eps", "region_loss",
      "class_balanced", "supervision", "delta", "delta_sweep", "fusion", "mcm_temperature"};
  return keys;
}

}  // namespace detail

inline nlohmann::json grid_to_json(const VoxelGridSpec& g) {
  return {{"origin", {g.origin.x(), g.origin.y(), g.origin.z()}},
          {"voxel_size", g.voxel_size},
          {"dims", {g.dim_x, g.dim_y, g.dim_z}}};
}

inline VoxelGridSpec grid_from_json(const nlohmann::json& j) {
  VoxelGridSpec g;
  if (j.contains("origin")) g.origin = detail::vec3_of(j.at("origin"));
  detail::read_opt(j, "voxel_size", g.voxel_size);
  if (j.contains("dims")) {
    const auto& d = j.at("dims");
    require(d.is_array() && d.size() == 3, "grid.dims must have 3 entries");
    g.dim_x = d[0].get<int>();
    g.dim_y = d[1].get<int>();
    g.dim_z = d[2].get<int>();
  }
  g.validate();
  return g;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  require(j.is_object(), "config: top level must be an object");
  for (const auto& [key, value] : j.items()) {
    const auto& keys = detail::config_keys();
    require(std::find(keys.begin(), keys.end(), key) != keys.end(), "config: unknown key '" + key + "'");
  }
  RunConfig c;
  try {
    if (j.contains("grid")) c.grid = grid_from_json(j.at("grid"));
    detail::read_opt(j, "frames", c.frames);
    detail::read_opt(j, "points_per_frame", c.points_per_frame);
    detail::read_opt(j, "reference_frame", c.reference_frame);
    detail::read_opt(j, "seed", c.seed);
    detail::read_opt(j, "parked_car", c.parked_car);
    detail::read_opt(j, "embed_dim", c.embed_dim);
    if (j.contains("pooling")) c.pooling = parse_pool_mode(j.at("pooling").get<std::string>());
    detail::read_opt(j, "feature_noise", c.feature_noise);
    detail::read_opt(j, "poisson_grid_res", c.poisson_grid_res);
    detail::read_opt(j, "normal_k", c.normal_k);
    detail::read_opt(j, "knn_k", c.knn_k);
    detail::read_opt(j, "unknown_set", c.unknown_set);
    if (j.contains("prompt_style")) c.prompt_style = parse_prompt_style(j.at("prompt_style").get<std::string>());
    if (j.contains("group_b")) {
      const auto g = j.at("group_b").get<std::string>();
      require(g == "grouped" || g == "identity", "config: group_b must be grouped|identity");
      c.grouped_classes = g == "grouped";
    }
    detail::read_opt(j, "feature_width", c.feature_width);
    detail::read_opt(j, "hidden_width", c.hidden_width);
    if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
    detail::read_opt(j, "lambda1", c.train.loss.lambda1);
    detail::read_opt(j, "lambda2", c.train.loss.lambda2);
    detail::read_opt(j, "tau1", c.train.loss.tau1);
    detail::read_opt(j, "tau2", c.train.loss.tau2);
    detail::read_opt(j, "epochs", c.train.epochs);
    detail::read_opt(j, "batch_size", c.train.batch_size);
    detail::read_opt(j, "lr", c.train.optim.lr);
    detail::read_opt(j, "weight_decay", c.train.optim.weight_decay);
    detail::read_opt(j, "clip_norm", c.train.optim.clip_norm);
    detail::read_opt(j, "beta1", c.train.optim.beta1);
    detail::read_opt(j, "beta2", c.train.optim.beta2);
    detail::read_opt(j, "eps", c.train.optim.eps);
    if (j.contains("region_loss")) c.train.region_loss = parse_region_loss(j.at("region_loss").get<std::string>());
    detail::read_opt(j, "class_balanced", c.train.class_balanced);
    if (j.contains("supervision")) {
      const auto s = j.at("supervision").get<std::string>();
      require(s == "gt" || s == "densified", "config: supervision must be gt|densified");
      c.supervise_with_gt = s == "gt";
    }
    detail::read_opt(j, "delta", c.openset.delta);
    detail::read_opt(j, "delta_sweep", c.delta_sweep);
    if (j.contains("fusion")) c.openset.fusion = parse_fusion_mode(j.at("fusion").get<std::string>());
    detail::read_opt(j, "mcm_temperature", c.openset.mcm_temperature);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.openset.tau2 = c.train.loss.tau2;
  c.validate();
  return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  return {{"grid", grid_to_json(c.grid)},
          {"frames", c.frames},
          {"points_per_frame", c.points_per_frame},
          {"reference_frame", c.reference_frame},
          {"seed", c.seed},
          {"parked_car", c.parked_car},
          {"embed_dim", c.embed_dim},
          {"pooling", to_string(c.pooling)},
          {"feature_noise", c.feature_noise},
          {"poisson_grid_res", c.poisson_grid_res},
          {"normal_k", c.normal_k},
          {"knn_k", c.knn_k},
          {"unknown_set", c.unknown_set},
          {"prompt_style", std::string(1, "ABC"[static_cast<int>(c.prompt_style)])},
          {"group_b", c.grouped_classes ? "grouped" : "identity"},
          {"feature_width", c.feature_width},
          {"hidden_width", c.hidden_width},
          {"activation", to_string(c.activation)},
          {"lambda1", c.train.loss.lambda1},
          {"lambda2", c.train.loss.lambda2},
          {"tau1", c.train.loss.tau1},
          {"tau2", c.train.loss.tau2},
          {"epochs", c.train.epochs},
          {"batch_size", c.train.batch_size},
          {"lr", c.train.optim.lr},
          {"weight_decay", c.train.optim.weight_decay},
          {"clip_norm", c.train.optim.clip_norm},
          {"beta1", c.train.optim.beta1},
          {"beta2", c.train.optim.beta2},
          {"eps", c.train.optim.eps},
          {"region_loss", c.train.region_loss == RegionLoss::Dcl ? "dcl" : "cossim"},
          {"class_balanced", c.train.class_balanced},
          {"supervision", c.supervise_with_gt ? "gt" : "densified"},
          {"delta", c.openset.delta},
          {"delta_sweep", c.delta_sweep},
          {"fusion", c.openset.fusion == FusionMode::Probability ? "probability" : "logit-max"},
          {"mcm_temperature", c.openset.mcm_temperature}};
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace loc
