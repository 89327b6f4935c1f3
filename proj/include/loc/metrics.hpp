#pragma once

// Closed-set (IoU) and open-set ranking metrics. For the ranking metrics the
// unknown class is positive and scores are anomaly scores (higher = more
// anomalous).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "loc/classes.hpp"
#include "loc/error.hpp"
#include "loc/scene.hpp"

namespace loc {

/// Counts over the full 0..255 label space; rows = ground truth, cols = prediction.
struct ConfusionMatrix {
  static constexpr int kLabels = 256;
  std::vector<std::int64_t> counts = std::vector<std::int64_t>(kLabels * kLabels, 0);
  std::int64_t ignored = 0;

  void add(ClassId gt, ClassId pred) {
    require(gt >= 0 && gt < kLabels && pred >= 0 && pred < kLabels, "ConfusionMatrix: label out of range");
    ++counts[gt * kLabels + pred];
  }
  std::int64_t at(ClassId gt, ClassId pred) const { return counts[gt * kLabels + pred]; }
  std::int64_t total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    ignored += o.ignored;
    return *this;
  }

  std::int64_t tp(ClassId c) const { return at(c, c); }
  std::int64_t fp(ClassId c) const {
    std::int64_t n = 0;
    for (int g = 0; g < kLabels; ++g)
      if (g != c) n += at(g, c);
    return n;
  }
  std::int64_t fn(ClassId c) const {
    std::int64_t n = 0;
    for (int p = 0; p < kLabels; ++p)
      if (p != c) n += at(c, p);
    return n;
  }
};

inline ConfusionMatrix confusion(const DenseLabelGrid& pred, const DenseLabelGrid& gt,
                                 const std::vector<ClassId>& unknown_set) {
  require(pred.spec == gt.spec, "confusion: grid spec mismatch");
  require(pred.labels.size() == gt.labels.size(), "confusion: size mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    if (std::find(unknown_set.begin(), unknown_set.end(), gt.labels[i]) != unknown_set.end()) {
      ++cm.ignored;
      continue;
    }
    cm.add(gt.labels[i], pred.labels[i]);
  }
  return cm;
}

struct IouResult {
  std::map<ClassId, double> per_class;  // classes with TP + FP + FN > 0
  double miou = 0.0;
  ConfusionMatrix confusion;
};

/// Evaluated classes are the semantic ids (plus FREE when include_free) that
/// are not in unknown_set and occur in ground truth or prediction.
inline IouResult miou_from_confusion(const ConfusionMatrix& cm, const std::vector<ClassId>& unknown_set,
                                     bool include_free) {
  IouResult r;
  r.confusion = cm;
  std::vector<ClassId> classes;
  for (ClassId c = 0; c < kNumSemanticClasses; ++c) classes.push_back(c);
  if (include_free) classes.push_back(kFree);
  double sum = 0.0;
  for (ClassId c : classes) {
    if (std::find(unknown_set.begin(), unknown_set.end(), c) != unknown_set.end()) continue;
    const std::int64_t tp = cm.tp(c), denom = tp + cm.fp(c) + cm.fn(c);
    if (denom == 0) continue;
    r.per_class[c] = static_cast<double>(tp) / static_cast<double>(denom);
    sum += r.per_class[c];
  }
  r.miou = r.per_class.empty() ? 0.0 : sum / static_cast<double>(r.per_class.size());
  return r;
}

inline IouResult miou(const DenseLabelGrid& pred, const DenseLabelGrid& gt,
                      const std::vector<ClassId>& unknown_set, bool include_free = false) {
  return miou_from_confusion(confusion(pred, gt, unknown_set), unknown_set, include_free);
}

struct BinaryScoreSet {
  std::vector<double> scores_known;    // negatives
  std::vector<double> scores_unknown;  // positives

  void validate() const {
    require(!scores_known.empty() && !scores_unknown.empty(), "BinaryScoreSet: both classes must be non-empty");
    for (double s : scores_known) require(std::isfinite(s), "BinaryScoreSet: non-finite score");
    for (double s : scores_unknown) require(std::isfinite(s), "BinaryScoreSet: non-finite score");
  }
};

namespace detail {

struct Ranked {
  double score;
  bool positive;
};

// Sorted by descending score.
inline std::vector<Ranked> ranked(const BinaryScoreSet& s) {
  std::vector<Ranked> v;
  v.reserve(s.scores_known.size() + s.scores_unknown.size());
  for (double x : s.scores_known) v.push_back({x, false});
  for (double x : s.scores_unknown) v.push_back({x, true});
  std::sort(v.begin(), v.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  return v;
}

// Calls f(tp, fp) after each block of tied scores, in descending score order.
template <class F>
void sweep_blocks(const std::vector<Ranked>& v, F&& f) {
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j].score == v[i].score) {
      (v[j].positive ? tp : fp) += 1;
      ++j;
    }
    f(tp, fp);
    i = j;
  }
}

}  // namespace detail

/// P(random unknown outranks random known), ties counted one half; via rank sums.
inline double auroc(const BinaryScoreSet& s) {
  s.validate();
  auto v = detail::ranked(s);
  std::reverse(v.begin(), v.end());  // ascending
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j].score == v[i].score) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (v[t].positive) rank_sum += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(s.scores_unknown.size());
  const double nn = static_cast<double>(s.scores_known.size());
  return (rank_sum - np * (np + 1) / 2) / (np * nn);
}

/// Area under precision-recall, step integration over descending thresholds
/// with tied scores handled as one block.
inline double aupr(const BinaryScoreSet& s) {
  require(!s.scores_unknown.empty(), "aupr: no positives");
  for (double x : s.scores_known) require(std::isfinite(x), "aupr: non-finite score");
  for (double x : s.scores_unknown) require(std::isfinite(x), "aupr: non-finite score");
  const double P = static_cast<double>(s.scores_unknown.size());
  double area = 0.0, prev_recall = 0.0;
  detail::sweep_blocks(detail::ranked(s), [&](std::int64_t tp, std::int64_t fp) {
    const double recall = tp / P;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  });
  return area;
}

/// False-positive rate at the largest threshold whose TPR reaches tpr_target.
inline double fpr_at_tpr(const BinaryScoreSet& s, double tpr_target = 0.95) {
  require(tpr_target > 0 && tpr_target <= 1, "fpr_at_tpr: target must be in (0, 1]");
  s.validate();
  const double P = static_cast<double>(s.scores_unknown.size());
  const double N = static_cast<double>(s.scores_known.size());
  double result = 1.0;
  bool found = false;
  detail::sweep_blocks(detail::ranked(s), [&](std::int64_t tp, std::int64_t fp) {
    if (!found && tp / P >= tpr_target) {
      result = fp / N;
      found = true;
    }
  });
  return result;
}

}  // namespace loc
