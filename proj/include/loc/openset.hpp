#pragma once

// Inference-time scoring: text probabilities, dual-head fusion, the delta
// threshold for unknowns, and the MSP / MCM baselines.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "loc/classes.hpp"
#include "loc/error.hpp"
#include "loc/losses.hpp"
#include "loc/vocab.hpp"

namespace loc {

/// Occupancy-head output index -> class id (known classes in vocabulary order, then FREE).
struct OccClassMap {
  std::vector<ClassId> ids;

  static OccClassMap from_vocab(const ClassVocabulary& vocab) {
    OccClassMap m;
    for (const auto& name : vocab.known_classes) {
      const auto id = class_id_of(name);
      require(id.has_value(), "OccClassMap: unknown class name " + name);
      m.ids.push_back(*id);
    }
    m.ids.push_back(kFree);
    return m;
  }

  int size() const { return static_cast<int>(ids.size()); }
  int index_of(ClassId c) const {
    auto it = std::find(ids.begin(), ids.end(), c);
    return it == ids.end() ? -1 : static_cast<int>(it - ids.begin());
  }
  int free_index() const { return index_of(kFree); }
};

inline Eigen::VectorXd cosine_scores(const Eigen::VectorXd& f, const Eigen::MatrixXd& E) {
  const double n = f.norm();
  require(n > 0, "cosine_scores: zero-norm feature");
  require(f.size() == E.cols(), "cosine_scores: width mismatch");
  return E * f / n;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp();
  return e / e.sum();
}

/// Softmax over cos(f, e_k) / tau2. E rows are expected to be unit length.
inline Eigen::VectorXd p_text(const Eigen::VectorXd& f, const Eigen::MatrixXd& E, double tau2) {
  require(tau2 > 0, "p_text: temperature must be positive");
  return softmax(cosine_scores(f, E) / tau2);
}

struct FusedScores {
  double s_occ = 0.0;
  double s_text = 0.0;
  double s_kn = 0.0;
};

inline FusedScores fuse_scores(const Eigen::VectorXd& p_occ, const Eigen::VectorXd& p_txt) {
  FusedScores s;
  s.s_occ = p_occ.maxCoeff();
  s.s_text = p_txt.maxCoeff();
  s.s_kn = 0.5 * (s.s_occ + s.s_text);
  return s;
}

/// Fusion over raw maxima (occupancy logit, scaled cosine) instead of probabilities.
inline FusedScores fuse_logit_max(const Eigen::VectorXd& occ_logits, const Eigen::VectorXd& text_logits) {
  FusedScores s;
  s.s_occ = occ_logits.maxCoeff();
  s.s_text = text_logits.maxCoeff();
  s.s_kn = 0.5 * (s.s_occ + s.s_text);
  return s;
}

struct VoxelScores {
  Eigen::VectorXd p_occ;
  Eigen::VectorXd p_text;
  double s_occ = 0.0, s_text = 0.0, s_kn = 0.0;
  ClassId predicted = kFree;
};

/// FREE when the occupancy head's argmax is FREE; otherwise UNKNOWN when
/// s_kn < delta; otherwise the coarse argmax of p_text.
inline ClassId classify_voxel(const VoxelScores& s, double delta, const ClassVocabulary& vocab,
                              const OccClassMap& occ_map) {
  require(s.p_occ.size() == occ_map.size(), "classify_voxel: p_occ length != occupancy classes");
  Eigen::Index occ_arg = 0;
  s.p_occ.maxCoeff(&occ_arg);
  if (occ_map.ids[occ_arg] == kFree) return kFree;
  if (s.s_kn < delta) return kUnknown;
  Eigen::Index cls = 0;
  fine_to_coarse(s.p_text, vocab).maxCoeff(&cls);
  return *class_id_of(vocab.known_classes[cls]);
}

inline double msp_score(const Eigen::VectorXd& p_occ) { return p_occ.maxCoeff(); }

inline double mcm_score(const Eigen::VectorXd& f, const Eigen::MatrixXd& E, double temperature) {
  require(temperature > 0, "mcm_score: temperature must be positive");
  return softmax(cosine_scores(f, E) / temperature).maxCoeff();
}

enum class FusionMode { Probability, LogitMax };

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "probability") return FusionMode::Probability;
  if (s == "logit-max") return FusionMode::LogitMax;
  throw ValidationError("unknown fusion mode '" + s + "' (expected probability|logit-max)");
}

struct OpenSetConfig {
  double tau2 = 0.5;
  double delta = 0.5;
  double mcm_temperature = 1.0;
  FusionMode fusion = FusionMode::Probability;
};

/// Per-row scores for a batch of model outputs. E holds one unit row per prompt.
inline std::vector<VoxelScores> score_voxels(const Eigen::MatrixXd& occ_logits, const Eigen::MatrixXd& text,
                                             const Eigen::MatrixXd& E, const ClassVocabulary& vocab,
                                             const OccClassMap& occ_map, const OpenSetConfig& cfg) {
  require(occ_logits.rows() == text.rows(), "score_voxels: row count mismatch");
  require(E.rows() == vocab.prompt_count(), "score_voxels: embedding rows != prompt count");
  const Eigen::MatrixXd p_occ = softmax_rows(occ_logits);
  std::vector<VoxelScores> out(static_cast<std::size_t>(text.rows()));
  for (Eigen::Index i = 0; i < text.rows(); ++i) {
    auto& s = out[i];
    s.p_occ = p_occ.row(i).transpose();
    const Eigen::VectorXd cos = cosine_scores(text.row(i).transpose(), E);
    s.p_text = softmax(cos / cfg.tau2);
    const FusedScores f = cfg.fusion == FusionMode::Probability
                              ? fuse_scores(s.p_occ, s.p_text)
                              : fuse_logit_max(occ_logits.row(i).transpose(), cos / cfg.tau2);
    s.s_occ = f.s_occ;
    s.s_text = f.s_text;
    s.s_kn = f.s_kn;
    s.predicted = classify_voxel(s, cfg.delta, vocab, occ_map);
  }
  return out;
}

}  // namespace loc
