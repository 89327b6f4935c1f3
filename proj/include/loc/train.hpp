#pragma once

// Per-voxel training data for the toy feature network and the training loop.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loc/feature_lift.hpp"
#include "loc/losses.hpp"
#include "loc/model.hpp"
#include "loc/openset.hpp"
#include "loc/optim.hpp"
#include "loc/random.hpp"
#include "loc/scene.hpp"
#include "loc/vocab.hpp"

namespace loc {

/// Hand-made per-voxel inputs: the 3x3x3 occupancy neighbourhood of V^D,
/// normalised height, lifted-feature presence and value at the voxel, and the
/// mean lifted feature and presence fraction over the 3x3x3 neighbourhood.
inline int voxel_input_width(int embed_width) { return 27 + 1 + 1 + embed_width + embed_width + 1; }

inline MatrixXd voxel_inputs(const DenseLabelGrid& occupancy, const SparseVoxelFeatures& lifted) {
  const auto& s = occupancy.spec;
  require(lifted.spec == s, "voxel_inputs: lifted features use a different grid");
  const int C = lifted.channels;
  MatrixXd x = MatrixXd::Zero(static_cast<Eigen::Index>(s.cell_count()), voxel_input_width(C));
  for (std::size_t idx = 0; idx < s.cell_count(); ++idx) {
    const VoxelIndex v = s.unlinear(idx);
    const auto row = static_cast<Eigen::Index>(idx);
    int col = 0;
    VectorXd mean = VectorXd::Zero(C);
    int present = 0;
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj)
        for (int dk = -1; dk <= 1; ++dk) {
          const VoxelIndex n{v.i + di, v.j + dj, v.k + dk};
          const bool in = s.contains(n);
          x(row, col++) = (in && occupancy.occupied(n)) ? 1.0 : 0.0;
          if (in)
            if (const auto* e = lifted.find(n)) {
              mean += e->feature;
              ++present;
            }
        }
    x(row, col++) = (v.k + 0.5) / s.dim_z;
    const auto* own = lifted.find(v);
    x(row, col++) = own ? 1.0 : 0.0;
    if (own) x.block(row, col, 1, C) = own->feature.transpose();
    col += C;
    if (present > 0) x.block(row, col, 1, C) = (mean / present).transpose();
    col += C;
    x(row, col) = present / 27.0;
  }
  return x;
}

/// One row per grid cell, in linear cell order.
struct VoxelDataset {
  VoxelGridSpec spec;
  MatrixXd inputs;
  std::vector<int> occ_targets;  // OccClassMap index, -1 = unsupervised
  std::vector<int> dcl_targets;  // known-class index, -1 = unsupervised
  MatrixXd kd_targets;           // lifted features (zero rows where absent)
  std::vector<bool> kd_mask;

  std::size_t size() const { return occ_targets.size(); }
};

/// `supervision` is V^D-hat (or the ground truth used in its place). Cells
/// whose class is not a known class (unknown, unlabelled occupied) get no
/// occupancy or contrastive target but keep their distillation target.
inline VoxelDataset build_dataset(const DenseLabelGrid& occupancy, const DenseLabelGrid& supervision,
                                  const SparseVoxelFeatures& lifted, const ClassVocabulary& vocab) {
  require(occupancy.spec == supervision.spec, "build_dataset: grid spec mismatch");
  const OccClassMap occ_map = OccClassMap::from_vocab(vocab);
  VoxelDataset d;
  d.spec = occupancy.spec;
  d.inputs = voxel_inputs(occupancy, lifted);
  const std::size_t n = d.spec.cell_count();
  d.occ_targets.assign(n, -1);
  d.dcl_targets.assign(n, -1);
  d.kd_targets = MatrixXd::Zero(static_cast<Eigen::Index>(n), lifted.channels);
  d.kd_mask.assign(n, false);
  for (std::size_t idx = 0; idx < n; ++idx) {
    const ClassId c = supervision.labels[idx];
    d.occ_targets[idx] = occ_map.index_of(c);
    if (c != kFree && d.occ_targets[idx] >= 0) d.dcl_targets[idx] = d.occ_targets[idx];
    if (const auto* e = lifted.find(d.spec.unlinear(idx))) {
      d.kd_targets.row(static_cast<Eigen::Index>(idx)) = e->feature.transpose();
      d.kd_mask[idx] = e->feature.norm() > 0;
    }
  }
  return d;
}

enum class RegionLoss { Dcl, CosSim };

inline RegionLoss parse_region_loss(const std::string& s) {
  if (s == "dcl") return RegionLoss::Dcl;
  if (s == "cossim") return RegionLoss::CosSim;
  throw ValidationError("unknown region loss '" + s + "' (expected dcl|cossim)");
}

struct TrainConfig {
  LossConfig loss;
  AdamWParams optim;
  int epochs = 200;
  int batch_size = 256;
  std::uint64_t seed = 0;
  RegionLoss region_loss = RegionLoss::Dcl;
  bool class_balanced = false;

  void validate() const {
    loss.validate();
    optim.validate();
    require(epochs >= 0, "TrainConfig: epochs must be >= 0");
    require(batch_size > 0, "TrainConfig: batch size must be positive");
  }
};

struct BatchLoss {
  LossParts parts;
  double total = 0.0;
};

/// Loss over `rows` of the dataset. When `grad` is given, parameter gradients
/// of the total are accumulated into it. `anchors` holds one unit row per
/// known class (the contrastive targets).
inline BatchLoss evaluate_batch(const DualHeadModel& model, const VoxelDataset& data, std::span<const int> rows,
                                const MatrixXd& anchors, const TrainConfig& cfg,
                                const std::optional<VectorXd>& class_weights = std::nullopt,
                                DualHeadModel* grad = nullptr) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  MatrixXd x(n, data.inputs.cols()), kd_t(n, data.kd_targets.cols());
  std::vector<int> occ_t(rows.size()), dcl_t(rows.size());
  std::vector<bool> kd_m(rows.size());
  bool any_occ = false, any_dcl = false, any_kd = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int r = rows[i];
    x.row(i) = data.inputs.row(r);
    kd_t.row(i) = data.kd_targets.row(r);
    occ_t[i] = data.occ_targets[r];
    dcl_t[i] = data.dcl_targets[r];
    kd_m[i] = data.kd_mask[r];
    any_occ |= occ_t[i] >= 0;
    any_dcl |= dcl_t[i] >= 0;
    any_kd |= kd_m[i];
  }
  DualHeadModel::Cache cache;
  const auto out = model.forward(x, grad ? &cache : nullptr);
  MatrixXd d_occ = MatrixXd::Zero(out.occ_logits.rows(), out.occ_logits.cols());
  MatrixXd d_text = MatrixXd::Zero(out.text.rows(), out.text.cols());
  BatchLoss bl;
  if (any_occ) {
    auto ce = loss_ce(out.occ_logits, occ_t, class_weights);
    bl.parts.ce = ce.value;
    d_occ = std::move(ce.grad);
  }
  if (any_kd && cfg.loss.lambda1 > 0) {
    auto kd = loss_kd(out.text, kd_t, kd_m);
    bl.parts.kd = kd.value;
    d_text += cfg.loss.lambda1 * kd.grad;
  }
  if (any_dcl && cfg.loss.lambda2 > 0) {
    auto rl = cfg.region_loss == RegionLoss::Dcl ? loss_dcl(out.text, anchors, dcl_t, cfg.loss.tau1)
                                                 : loss_cossim(out.text, anchors, dcl_t);
    bl.parts.dcl = rl.value;
    d_text += cfg.loss.lambda2 * rl.grad;
  }
  bl.total = loss_total(bl.parts, cfg.loss);
  if (grad) model.backward(cache, d_occ, d_text, *grad);
  return bl;
}

struct EpochStats {
  double total = 0.0;
  double ce = 0.0;
  std::optional<double> kd;
  std::optional<double> dcl;
};

struct TrainResult {
  std::vector<EpochStats> trace;
};

/// Minibatch AdamW over shuffled cells. Deterministic for a given seed.
/// Throws NumericalError when the loss stops being finite.
inline TrainResult train(DualHeadModel& model, const VoxelDataset& data, const MatrixXd& anchors,
                         const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  require(data.inputs.cols() == model.input_width(), "train: input width mismatch");
  require(anchors.cols() == model.embed_width(), "train: anchor width != embedding width");
  require(data.size() > 0, "train: empty dataset");
  std::optional<VectorXd> weights;
  if (cfg.class_balanced) weights = inverse_frequency_weights(data.occ_targets, model.num_classes());
  AdamW opt(cfg.optim);
  Rng rng(cfg.seed);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    EpochStats st;
    double kd_sum = 0.0, dcl_sum = 0.0;
    bool has_kd = false, has_dcl = false;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      const std::span<const int> rows(order.data() + start, len);
      DualHeadModel grad = model.zeros_like();
      const BatchLoss bl = evaluate_batch(model, data, rows, anchors, cfg, weights, &grad);
      if (!std::isfinite(bl.total))
        throw NumericalError("train: loss diverged at epoch " + std::to_string(epoch));
      const double w = static_cast<double>(len) / static_cast<double>(order.size());
      st.total += w * bl.total;
      st.ce += w * bl.parts.ce;
      if (bl.parts.kd) {
        kd_sum += w * *bl.parts.kd;
        has_kd = true;
      }
      if (bl.parts.dcl) {
        dcl_sum += w * *bl.parts.dcl;
        has_dcl = true;
      }
      opt.step(model.parameters(), grad.parameters());
    }
    if (has_kd) st.kd = kd_sum;
    if (has_dcl) st.dcl = dcl_sum;
    result.trace.push_back(st);
  }
  return result;
}

}  // namespace loc
