#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "loc/error.hpp"
#include "loc/random.hpp"

namespace loc {

enum class PromptStyle { A, B, C };

inline PromptStyle parse_prompt_style(const std::string& s) {
  if (s == "A" || s == "a") return PromptStyle::A;
  if (s == "B" || s == "b") return PromptStyle::B;
  if (s == "C" || s == "c") return PromptStyle::C;
  throw ValidationError("unknown prompt style: " + s);
}

/// Fine-grained names for each coarse nuScenes class (43 names over 16 classes).
inline const std::map<std::string, std::vector<std::string>>& default_group_b_map() {
  static const std::map<std::string, std::vector<std::string>> m = {
      {"barrier", {"barrier", "barricade"}},
      {"bicycle", {"bicycle"}},
      {"bus", {"bus"}},
      {"car", {"car"}},
      {"construction vehicle", {"bulldozer", "excavator", "concrete mixer", "crane", "dump truck"}},
      {"motorcycle", {"motorcycle"}},
      {"pedestrian", {"pedestrian", "person"}},
      {"traffic cone", {"traffic cone"}},
      {"trailer", {"trailer", "semi trailer", "cargo container", "shipping container", "freight container"}},
      {"truck", {"truck"}},
      {"drivable surface", {"road"}},
      {"other flat", {"curb", "traffic island", "traffic median"}},
      {"sidewalk", {"sidewalk"}},
      {"terrain", {"grass", "grassland", "lawn", "meadow", "turf", "sod"}},
      {"manmade", {"building", "wall", "pole", "awning"}},
      {"vegetation", {"tree", "trunk", "tree trunk", "bush", "shrub", "plant", "flower", "woods"}},
  };
  return m;
}

/// The 16 coarse nuScenes names, excluding "others".
inline std::vector<std::string> nuscenes_class_names() {
  return {"barrier",     "bicycle",          "bus",        "car",          "construction vehicle",
          "motorcycle",  "pedestrian",       "traffic cone", "trailer",    "truck",
          "drivable surface", "other flat",  "sidewalk",   "terrain",      "manmade",
          "vegetation"};
}

inline bool is_excluded_from_prompts(const std::string& name) {
  return name == "others" || name == "other" || name == "free";
}

struct Prompt {
  int class_index = 0;  // index into ClassVocabulary::known_classes
  std::string text;
};

struct ClassVocabulary {
  std::vector<std::string> known_classes;
  std::vector<Prompt> prompts;
  std::map<std::string, std::vector<std::string>> group_b_map;
  std::vector<std::string> unknown_set;
  PromptStyle style = PromptStyle::C;

  int class_count() const { return static_cast<int>(known_classes.size()); }
  int prompt_count() const { return static_cast<int>(prompts.size()); }

  int index_of(const std::string& name) const {
    auto it = std::find(known_classes.begin(), known_classes.end(), name);
    return it == known_classes.end() ? -1 : static_cast<int>(it - known_classes.begin());
  }

  std::vector<std::string> prompt_texts() const {
    std::vector<std::string> out;
    for (const auto& p : prompts) out.push_back(p.text);
    return out;
  }

  /// Prompt rows belonging to each known class.
  std::vector<std::vector<int>> prompts_by_class() const {
    std::vector<std::vector<int>> out(known_classes.size());
    for (int r = 0; r < prompt_count(); ++r) out[prompts[r].class_index].push_back(r);
    return out;
  }
};

/// Classes in `unknown_set` and the "others"/"free" pseudo-classes are dropped
/// from the known list and never prompted.
inline ClassVocabulary build_prompts(const std::vector<std::string>& classes, PromptStyle style,
                                     const std::vector<std::string>& unknown_set = {},
                                     const std::map<std::string, std::vector<std::string>>& group_b =
                                         default_group_b_map()) {
  require(!classes.empty(), "build_prompts: empty class list");
  ClassVocabulary vocab;
  vocab.group_b_map = group_b;
  vocab.unknown_set = unknown_set;
  vocab.style = style;
  for (const auto& name : classes) {
    if (is_excluded_from_prompts(name)) continue;
    if (std::find(unknown_set.begin(), unknown_set.end(), name) != unknown_set.end()) continue;
    require(vocab.index_of(name) < 0, "build_prompts: duplicate class " + name);
    const int idx = static_cast<int>(vocab.known_classes.size());
    vocab.known_classes.push_back(name);

    std::vector<std::string> fine{name};
    if (style != PromptStyle::A) {
      if (auto it = group_b.find(name); it != group_b.end()) fine = it->second;
    }
    for (const auto& f : fine) {
      vocab.prompts.push_back({idx, style == PromptStyle::C ? "a " + f + " in a scene" : f});
    }
  }
  return vocab;
}

enum class EmbeddingSource { Clip, Mock };

/// K x C_o unit rows in prompt order.
struct TextEmbeddingSet {
  Eigen::MatrixXd embeddings;
  std::vector<int> class_ids;  // per row, index into known_classes
  std::vector<std::string> prompts;
  EmbeddingSource source = EmbeddingSource::Mock;

  int rows() const { return static_cast<int>(embeddings.rows()); }
  int dim() const { return static_cast<int>(embeddings.cols()); }

  void normalize_rows() {
    for (Eigen::Index r = 0; r < embeddings.rows(); ++r) {
      const double n = embeddings.row(r).norm();
      if (!(n > 0.0) || !std::isfinite(n)) throw ValidationError("TextEmbeddingSet: zero or non-finite row");
      embeddings.row(r) /= n;
    }
  }

  void validate() const {
    require(static_cast<std::size_t>(embeddings.rows()) == class_ids.size(),
            "TextEmbeddingSet: class_ids length != row count");
    for (Eigen::Index r = 0; r < embeddings.rows(); ++r)
      require(std::abs(embeddings.row(r).norm() - 1.0) <= 1e-6, "TextEmbeddingSet: row is not unit norm");
  }
};

/// Deterministic Gaussian rows made mutually orthogonal by Gram-Schmidt while
/// rows < dim; each later row is only normalised.
inline Eigen::MatrixXd mock_unit_vectors(int count, int dim, std::uint64_t seed) {
  require(count >= 0 && dim > 0, "mock_unit_vectors: bad shape");
  Rng rng(seed);
  Eigen::MatrixXd out(count, dim);
  for (int r = 0; r < count; ++r) {
    Eigen::VectorXd v(dim);
    for (int c = 0; c < dim; ++c) v[c] = rng.normal();
    const Eigen::VectorXd raw = v;
    if (r < dim) {
      for (int q = 0; q < r; ++q) v -= v.dot(out.row(q).transpose()) * out.row(q).transpose();
      for (int q = 0; q < r; ++q) v -= v.dot(out.row(q).transpose()) * out.row(q).transpose();
    }
    double n = v.norm();
    if (n < 1e-8 * raw.norm()) {
      v = raw;
      n = v.norm();
    }
    out.row(r) = (v / n).transpose();
  }
  return out;
}

inline TextEmbeddingSet mock_embeddings(const ClassVocabulary& vocab, int dim, std::uint64_t seed) {
  TextEmbeddingSet set;
  set.embeddings = mock_unit_vectors(vocab.prompt_count(), dim, seed);
  for (const auto& p : vocab.prompts) {
    set.class_ids.push_back(p.class_index);
    set.prompts.push_back(p.text);
  }
  set.source = EmbeddingSource::Mock;
  return set;
}

/// Coarse class score = max over that class's prompt scores (-inf if none).
inline Eigen::VectorXd fine_to_coarse(const Eigen::VectorXd& scores, const ClassVocabulary& vocab) {
  if (scores.size() != vocab.prompt_count())
    throw ValidationError("fine_to_coarse: score length != prompt count");
  Eigen::VectorXd out = Eigen::VectorXd::Constant(vocab.class_count(), -std::numeric_limits<double>::infinity());
  for (int r = 0; r < vocab.prompt_count(); ++r) {
    const int c = vocab.prompts[r].class_index;
    out[c] = std::max(out[c], scores[r]);
  }
  return out;
}

/// Unit-normalised mean of each class's prompt embeddings (one row per known class).
inline Eigen::MatrixXd class_prototypes(const TextEmbeddingSet& set, int class_count) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(class_count, set.dim());
  for (int r = 0; r < set.rows(); ++r) {
    require(set.class_ids[r] >= 0 && set.class_ids[r] < class_count, "class_prototypes: bad class id");
    out.row(set.class_ids[r]) += set.embeddings.row(r);
  }
  for (int c = 0; c < class_count; ++c) {
    const double n = out.row(c).norm();
    require(n > 0.0, "class_prototypes: class without prompts");
    out.row(c) /= n;
  }
  return out;
}

}  // namespace loc
