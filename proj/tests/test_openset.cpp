#include <gtest/gtest.h>

#include <cmath>

#include "loc/openset.hpp"
#include "loc/random.hpp"
#include "oracles.hpp"

using namespace loc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ClassVocabulary two_classes() { return build_prompts({"car", "manmade"}, PromptStyle::A); }

VoxelScores scores(std::vector<double> p_occ, std::vector<double> p_txt, double s_kn) {
  VoxelScores s;
  s.p_occ = Eigen::Map<VectorXd>(p_occ.data(), static_cast<Eigen::Index>(p_occ.size()));
  s.p_text = Eigen::Map<VectorXd>(p_txt.data(), static_cast<Eigen::Index>(p_txt.size()));
  s.s_kn = s_kn;
  return s;
}

}  // namespace

TEST(OccMap, VocabularyOrderThenFree) {
  const auto m = OccClassMap::from_vocab(two_classes());
  EXPECT_EQ(m.ids, (std::vector<ClassId>{4, 15, kFree}));
  EXPECT_EQ(m.free_index(), 2);
  EXPECT_EQ(m.index_of(kUnknown), -1);
}

TEST(PText, Examples) {
  const MatrixXd E = MatrixXd::Identity(2, 2);
  VectorXd f(2);
  f << 3, 0;
  const auto p = p_text(f, E, 0.5);
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-2.0)), 1e-12);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  // Only the direction of f matters.
  EXPECT_LT((p_text(10 * f, E, 0.5) - p).norm(), 1e-15);
  EXPECT_THROW(p_text(VectorXd::Zero(2), E, 0.5), ValidationError);
  EXPECT_THROW(p_text(f, E, 0.0), ValidationError);
}

TEST(Fuse, MeanOfMaxima) {
  VectorXd a(3), b(2);
  a << 0.2, 0.7, 0.1;
  b << 0.4, 0.6;
  const auto s = fuse_scores(a, b);
  EXPECT_DOUBLE_EQ(s.s_occ, 0.7);
  EXPECT_DOUBLE_EQ(s.s_text, 0.6);
  EXPECT_DOUBLE_EQ(s.s_kn, 0.65);
  EXPECT_DOUBLE_EQ(msp_score(a), 0.7);
}

TEST(Classify, DecisionRule) {
  const auto v = two_classes();
  const auto m = OccClassMap::from_vocab(v);
  EXPECT_EQ(classify_voxel(scores({0.1, 0.1, 0.8}, {0.9, 0.1}, 0.9), 0.5, v, m), kFree);
  EXPECT_EQ(classify_voxel(scores({0.8, 0.1, 0.1}, {0.1, 0.9}, 0.4), 0.5, v, m), kUnknown);
  EXPECT_EQ(classify_voxel(scores({0.8, 0.1, 0.1}, {0.1, 0.9}, 0.6), 0.5, v, m), 15);
  // Text decides the class even when the occupancy head prefers another.
  EXPECT_EQ(classify_voxel(scores({0.1, 0.8, 0.1}, {0.7, 0.3}, 0.6), 0.5, v, m), 4);
  EXPECT_EQ(classify_voxel(scores({0.8, 0.1, 0.1}, {0.1, 0.9}, 0.5), 0.5, v, m), 15);  // s_kn == delta is known
}

TEST(Classify, MultiPromptClassesUseCoarseMax) {
  const auto v = build_prompts({"car", "terrain"}, PromptStyle::B);
  const auto m = OccClassMap::from_vocab(v);
  // Terrain's mass is spread over six prompts; car's single prompt wins.
  EXPECT_EQ(classify_voxel(scores({0.9, 0.05, 0.05}, {0.3, 0.12, 0.12, 0.12, 0.12, 0.11, 0.11}, 0.9), 0.5, v, m), 4);
  EXPECT_EQ(classify_voxel(scores({0.9, 0.05, 0.05}, {0.1, 0.4, 0.1, 0.1, 0.1, 0.1, 0.1}, 0.9), 0.5, v, m), 14);
}

TEST(Mcm, TemperatureSharpens) {
  const MatrixXd E = MatrixXd::Identity(3, 3);
  VectorXd f(3);
  f << 1, 0.5, 0;
  EXPECT_GT(mcm_score(f, E, 0.1), mcm_score(f, E, 1.0));
  EXPECT_NEAR(mcm_score(f, E, 1e6), 1.0 / 3.0, 1e-6);
  EXPECT_THROW(mcm_score(f, E, -1.0), ValidationError);
}

TEST(ScoreVoxels, PropertiesOnRandomOutputs) {
  Rng rng(51);
  const auto v = build_prompts({"car", "manmade", "vegetation"}, PromptStyle::A);
  const auto m = OccClassMap::from_vocab(v);
  const MatrixXd E = oracle::random_matrix(rng, 3, 8).rowwise().normalized();
  for (auto fusion : {FusionMode::Probability, FusionMode::LogitMax}) {
    OpenSetConfig cfg;
    cfg.fusion = fusion;
    const MatrixXd logits = oracle::random_matrix(rng, 200, 4, 3.0);
    const MatrixXd text = oracle::random_matrix(rng, 200, 8);
    const auto out = score_voxels(logits, text, E, v, m, cfg);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto& s = out[i];
      EXPECT_NEAR(s.p_occ.sum(), 1.0, 1e-12);
      EXPECT_NEAR(s.p_text.sum(), 1.0, 1e-12);
      if (fusion == FusionMode::Probability) {
        // Each maximum of a K-way distribution lies in [1/K, 1].
        EXPECT_GE(s.s_kn, 0.5 * (1.0 / 4 + 1.0 / 3) - 1e-12);
        EXPECT_LE(s.s_kn, 1.0);
      }
      Eigen::Index arg;
      s.p_occ.maxCoeff(&arg);
      if (arg == 3) {
        EXPECT_EQ(s.predicted, kFree);
      } else if (s.s_kn < cfg.delta) {
        EXPECT_EQ(s.predicted, kUnknown);
      } else {
        EXPECT_TRUE(s.predicted == 4 || s.predicted == 15 || s.predicted == 16);
      }
    }
  }
}

TEST(ScoreVoxels, DeltaIsMonotone) {
  Rng rng(52);
  const auto v = build_prompts({"car", "manmade"}, PromptStyle::A);
  const auto m = OccClassMap::from_vocab(v);
  const MatrixXd E = oracle::random_matrix(rng, 2, 6).rowwise().normalized();
  const MatrixXd logits = oracle::random_matrix(rng, 300, 3), text = oracle::random_matrix(rng, 300, 6);
  int prev = -1;
  for (double delta = 0.0; delta <= 1.0; delta += 0.1) {
    OpenSetConfig cfg;
    cfg.delta = delta;
    int unknown = 0;
    for (const auto& s : score_voxels(logits, text, E, v, m, cfg)) unknown += s.predicted == kUnknown;
    EXPECT_GE(unknown, prev);
    prev = unknown;
  }
  EXPECT_EQ(parse_fusion_mode("logit-max"), FusionMode::LogitMax);
  EXPECT_THROW(parse_fusion_mode("sum"), ValidationError);
}
