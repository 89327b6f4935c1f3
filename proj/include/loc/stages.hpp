#pragma once

// Pipeline stages as library calls. The command-line tool is a thin wrapper
// over these, which keeps its outputs comparable with direct API use.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "loc/config.hpp"
#include "loc/io/scene_io.hpp"
#include "loc/metrics.hpp"
#include "loc/openset.hpp"
#include "loc/pipeline.hpp"
#include "loc/synthetic.hpp"
#include "loc/train.hpp"

namespace loc {

inline ClassVocabulary scene_vocabulary(const RunConfig& cfg, const std::vector<ClassId>& classes) {
  return cfg.vocabulary(cfg.known_class_names(classes));
}

inline TextEmbeddingSet scene_mock_embeddings(const RunConfig& cfg, const ClassVocabulary& vocab) {
  return mock_embeddings(vocab, cfg.embed_dim, cfg.seed);
}

/// Synthetic scene plus one rendered mock feature map per camera. Known
/// classes render as their prompt prototype, so the maps agree with
/// scene_mock_embeddings for the same configuration.
inline io::SceneData generate_scene_data(const RunConfig& cfg) {
  SyntheticSceneConfig sc;
  sc.points_per_frame = cfg.points_per_frame;
  sc.include_parked_car = cfg.parked_car;
  const SyntheticScene scene = generate_synthetic_scene(cfg.seed, cfg.frames, cfg.grid, sc);
  io::SceneData data = io::scene_data_of(scene);
  const ClassVocabulary vocab = scene_vocabulary(cfg, data.classes);
  std::vector<ClassId> unknown;
  for (ClassId c : data.classes)
    if (vocab.index_of(class_name_of(c)) < 0) unknown.push_back(c);
  const MockClassFeatures mf = mock_class_features(vocab, unknown, cfg.embed_dim, cfg.seed);
  for (std::size_t i = 0; i < scene.cameras.size(); ++i)
    data.feature_maps.push_back(render_feature_map(scene.ground_truth, scene.cameras[i], mf, cfg.feature_noise,
                                                   cfg.seed * 1000 + i + 1));
  return data;
}

inline DensifyOptions densify_options(const RunConfig& cfg) {
  DensifyOptions o;
  o.reference = cfg.reference_frame;
  o.grid_res = cfg.poisson_grid_res;
  o.normal_k = cfg.normal_k;
  o.knn_k = cfg.knn_k;
  return o;
}

inline DensifyResult densify_scene(const io::SceneData& d, const RunConfig& cfg) {
  require(!d.clouds.empty(), "densify: scene has no frames");
  std::size_t total = 0;
  for (const auto& c : d.clouds) total += c.size();
  require(total > 0, "densify: scene has no points");
  return densify_sequence(d.clouds, d.boxes, d.poses, d.ego_box, d.spec, densify_options(cfg));
}

/// V_psi from the fused reference-frame cloud and the scene's feature maps.
inline SparseVoxelFeatures lift_scene(const io::SceneData& d, const RunConfig& cfg) {
  require(!d.feature_maps.empty(), "lift: scene has no feature maps");
  std::vector<CameraView> views;
  for (std::size_t i = 0; i < d.cameras.size(); ++i) views.push_back({d.cameras[i], d.feature_maps[i]});
  const PointCloud fused = fuse_sequence(d.clouds, d.boxes, d.poses, d.ego_box, cfg.reference_frame);
  return build_sparse_voxel_features(fused, views, d.spec, cfg.pooling);
}

inline DualHeadModel::Config model_config(const RunConfig& cfg, int input_width, int num_classes) {
  DualHeadModel::Config mc;
  mc.input_width = input_width;
  mc.feature_width = cfg.feature_width;
  mc.hidden_width = cfg.hidden_width;
  mc.num_classes = num_classes;
  mc.embed_width = cfg.embed_dim;
  mc.activation = cfg.activation;
  return mc;
}

struct TrainOutcome {
  DualHeadModel model;
  TrainResult result;
};

/// `supervision` is the ground truth or V^D-hat, per the configuration.
inline TrainOutcome train_model(const RunConfig& cfg, const DenseLabelGrid& occupancy,
                                const DenseLabelGrid& supervision, const SparseVoxelFeatures& lifted,
                                const TextEmbeddingSet& embeddings, const ClassVocabulary& vocab) {
  require(embeddings.dim() == cfg.embed_dim, "train: embedding width != embed_dim");
  require(lifted.channels == cfg.embed_dim, "train: lifted feature width != embed_dim");
  const VoxelDataset data = build_dataset(occupancy, supervision, lifted, vocab);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.loss.num_classes = vocab.class_count() + 1;
  TrainOutcome out;
  out.model = DualHeadModel::make(model_config(cfg, static_cast<int>(data.inputs.cols()), tc.loss.num_classes), cfg.seed);
  out.result = train(out.model, data, class_prototypes(embeddings, vocab.class_count()), tc);
  return out;
}

inline nlohmann::json trace_to_json(const TrainResult& r) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& e : r.trace) {
    nlohmann::json j = {{"total", e.total}, {"ce", e.ce}};
    if (e.kd) j["kd"] = *e.kd;
    if (e.dcl) j["dcl"] = *e.dcl;
    a.push_back(j);
  }
  return a;
}

struct EvalOutcome {
  nlohmann::json report;  // without the header
  DenseLabelGrid prediction;
  std::vector<double> s_occ, s_text, s_kn;
  BinaryScoreSet ours, msp, mcm;
};

inline nlohmann::json ranking_json(const BinaryScoreSet& s) {
  if (s.scores_known.empty() || s.scores_unknown.empty())
    return {{"auroc", nullptr}, {"aupr", nullptr}, {"fpr95", nullptr}};
  return {{"auroc", auroc(s)}, {"aupr", aupr(s)}, {"fpr95", fpr_at_tpr(s, 0.95)}};
}

/// Inference, open-set scoring and metrics against the ground truth. Only
/// cells occupied in the ground truth are ranked unless rank_free is set.
inline EvalOutcome evaluate_model(const RunConfig& cfg, const DualHeadModel& model, const DenseLabelGrid& occupancy,
                                  const SparseVoxelFeatures& lifted, const DenseLabelGrid& gt,
                                  const TextEmbeddingSet& embeddings, const ClassVocabulary& vocab,
                                  bool rank_free = false) {
  require(gt.spec == occupancy.spec, "eval: grid spec mismatch");
  const MatrixXd x = voxel_inputs(occupancy, lifted);
  require(x.cols() == model.input_width(), "eval: checkpoint input width does not match the data");
  const auto out = model.forward(x);
  const OccClassMap occ_map = OccClassMap::from_vocab(vocab);
  require(model.num_classes() == occ_map.size(), "eval: checkpoint class count does not match the vocabulary");
  OpenSetConfig oc = cfg.openset;
  const auto scores = score_voxels(out.occ_logits, out.text, embeddings.embeddings, vocab, occ_map, oc);

  std::vector<ClassId> unknown;
  for (ClassId c = 0; c < kNumSemanticClasses; ++c)
    if (vocab.index_of(class_name_of(c)) < 0) unknown.push_back(c);

  EvalOutcome ev;
  ev.prediction = DenseLabelGrid(gt.spec);
  std::int64_t known_occ = 0, unknown_occ = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    ev.prediction.labels[i] = s.predicted;
    ev.s_occ.push_back(s.s_occ);
    ev.s_text.push_back(s.s_text);
    ev.s_kn.push_back(s.s_kn);
    const ClassId g = gt.labels[i];
    if (g == kFree && !rank_free) continue;
    const bool positive = std::find(unknown.begin(), unknown.end(), g) != unknown.end();
    (positive ? unknown_occ : known_occ) += 1;
    const double mcm = mcm_score(out.text.row(static_cast<Eigen::Index>(i)).transpose(), embeddings.embeddings,
                                 oc.mcm_temperature);
    (positive ? ev.ours.scores_unknown : ev.ours.scores_known).push_back(1.0 - s.s_kn);
    (positive ? ev.msp.scores_unknown : ev.msp.scores_known).push_back(1.0 - s.s_occ);
    (positive ? ev.mcm.scores_unknown : ev.mcm.scores_known).push_back(1.0 - mcm);
  }

  // Only classes that occur in the ground truth are masked as unknown.
  std::vector<ClassId> mask;
  for (ClassId c : unknown)
    if (std::find(gt.labels.begin(), gt.labels.end(), c) != gt.labels.end()) mask.push_back(c);
  const IouResult iou = miou(ev.prediction, gt, mask, false);

  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [c, v] : iou.per_class) per_class[class_name_of(c)] = v;
  nlohmann::json sweep = nlohmann::json::array();
  for (double delta : cfg.delta_sweep) {
    DenseLabelGrid p(gt.spec);
    std::int64_t flagged_unknown = 0, true_unknown = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      p.labels[i] = classify_voxel(scores[i], delta, vocab, occ_map);
      if (std::find(mask.begin(), mask.end(), gt.labels[i]) != mask.end()) {
        ++true_unknown;
        flagged_unknown += p.labels[i] == kUnknown;
      }
    }
    sweep.push_back({{"delta", delta},
                     {"miou", miou(p, gt, mask, false).miou},
                     {"unknown_recall", true_unknown ? nlohmann::json(double(flagged_unknown) / true_unknown)
                                                     : nlohmann::json(nullptr)}});
  }
  nlohmann::json metrics = ranking_json(ev.ours);
  ev.report = {{"miou", iou.miou},
               {"per_class_iou", per_class},
               {"auroc", metrics["auroc"]},
               {"aupr", metrics["aupr"]},
               {"fpr95", metrics["fpr95"]},
               {"baselines", {{"msp", ranking_json(ev.msp)}, {"mcm", ranking_json(ev.mcm)}}},
               {"delta", oc.delta},
               {"delta_sweep", sweep},
               {"counts",
                {{"voxels", gt.labels.size()},
                 {"ignored", iou.confusion.ignored},
                 {"ranked_known", known_occ},
                 {"ranked_unknown", unknown_occ}}},
               {"unknown_classes", [&] {
                  std::vector<std::string> n;
                  for (ClassId c : mask) n.push_back(class_name_of(c));
                  return n;
                }()},
               {"config", config_to_json(cfg)}};
  return ev;
}

}  // namespace loc
