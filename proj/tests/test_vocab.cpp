#include <gtest/gtest.h>

#include <set>

#include "loc/classes.hpp"
#include "loc/random.hpp"
#include "loc/vocab.hpp"

using namespace loc;

TEST(Classes, IdsAndNames) {
  EXPECT_EQ(class_id_of("car"), 4);
  EXPECT_EQ(class_id_of("construction vehicle"), 5);
  EXPECT_EQ(class_id_of("free"), kFree);
  EXPECT_FALSE(class_id_of("construction_vehicle"));
  EXPECT_EQ(class_name_of(16), "vegetation");
  EXPECT_EQ(class_name_of(kUnknown), "unknown");
  for (int c = 0; c < kNumSemanticClasses; ++c) EXPECT_EQ(class_id_of(class_name_of(c)), c);
}

TEST(Prompts, StyleCTemplate) {
  const auto v = build_prompts({"car"}, PromptStyle::C);
  ASSERT_EQ(v.prompt_count(), 1);
  EXPECT_EQ(v.prompts[0].text, "a car in a scene");
}

TEST(Prompts, StyleBExpandsTerrain) {
  const auto v = build_prompts({"terrain"}, PromptStyle::B);
  EXPECT_EQ(v.prompt_texts(), (std::vector<std::string>{"grass", "grassland", "lawn", "meadow", "turf", "sod"}));
  const auto a = build_prompts({"terrain"}, PromptStyle::A);
  EXPECT_EQ(a.prompt_texts(), std::vector<std::string>{"terrain"});
}

TEST(Prompts, FullGroupHasFortyThreeNames) {
  const auto v = build_prompts(nuscenes_class_names(), PromptStyle::B);
  EXPECT_EQ(v.class_count(), 16);
  EXPECT_EQ(v.prompt_count(), 43);
  const auto texts = v.prompt_texts();
  std::set<std::string> uniq(texts.begin(), texts.end());
  EXPECT_EQ(uniq.size(), 43u);
}

TEST(Prompts, UnknownAndPseudoClassesAreNeverPrompted) {
  auto names = nuscenes_class_names();
  names.insert(names.begin(), "others");
  names.push_back("free");
  const auto v = build_prompts(names, PromptStyle::C, {"construction vehicle", "trailer"});
  EXPECT_EQ(v.class_count(), 14);
  EXPECT_EQ(v.index_of("trailer"), -1);
  EXPECT_EQ(v.index_of("others"), -1);
  for (const auto& p : v.prompt_texts()) {
    EXPECT_EQ(p.find("excavator"), std::string::npos);
    EXPECT_EQ(p.find("free"), std::string::npos);
  }
  EXPECT_EQ(v.prompt_count(), 43 - 5 - 5);
}

TEST(Prompts, RejectsDuplicatesAndEmpty) {
  EXPECT_THROW(build_prompts({"car", "car"}, PromptStyle::C), ValidationError);
  EXPECT_THROW(build_prompts({}, PromptStyle::C), ValidationError);
  EXPECT_THROW(parse_prompt_style("D"), ValidationError);
}

TEST(MockEmbeddings, OrthonormalWhileRowsFit) {
  const auto e = mock_unit_vectors(2, 8, 1);
  EXPECT_NEAR(e.row(0).dot(e.row(1)), 0.0, 1e-12);
  EXPECT_NEAR(e.row(0).norm(), 1.0, 1e-12);
  const auto big = mock_unit_vectors(16, 768, 3);
  const Eigen::MatrixXd g = big * big.transpose();
  EXPECT_LT((g - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MockEmbeddings, LowCoherenceBeyondDimension) {
  const auto e = mock_unit_vectors(40, 768, 5);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < i; ++j) EXPECT_LE(std::abs(e.row(i).dot(e.row(j))), 0.2);
  // More rows than dimensions: later rows are only normalised.
  const auto over = mock_unit_vectors(12, 4, 5);
  for (int i = 0; i < 12; ++i) EXPECT_NEAR(over.row(i).norm(), 1.0, 1e-12);
}

TEST(MockEmbeddings, DeterministicPerSeed) {
  const auto v = build_prompts(nuscenes_class_names(), PromptStyle::C);
  const auto a = mock_embeddings(v, 32, 9), b = mock_embeddings(v, 32, 9), c = mock_embeddings(v, 32, 10);
  EXPECT_EQ(a.embeddings, b.embeddings);
  EXPECT_NE(a.embeddings, c.embeddings);
  a.validate();
  EXPECT_EQ(a.prompts, v.prompt_texts());
}

TEST(FineToCoarse, MaxOverPrompts) {
  const auto v = build_prompts({"barrier", "car", "terrain"}, PromptStyle::B);
  ASSERT_EQ(v.prompt_count(), 9);
  Eigen::VectorXd s(9);
  s << 0.1, 0.7, 0.3, 0.2, 0.9, 0.4, 0.0, 0.5, -1.0;
  const auto c = fine_to_coarse(s, v);
  EXPECT_DOUBLE_EQ(c[0], 0.7);
  EXPECT_DOUBLE_EQ(c[1], 0.3);
  EXPECT_DOUBLE_EQ(c[2], 0.9);
  EXPECT_THROW(fine_to_coarse(Eigen::VectorXd(3), v), ValidationError);
}

TEST(FineToCoarse, BruteForceAndMonotoneInvariance) {
  Rng rng(35);
  const auto v = build_prompts(nuscenes_class_names(), PromptStyle::B);
  const auto groups = v.prompts_by_class();
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd s(v.prompt_count());
    for (auto& x : s) x = rng.normal();
    const auto c = fine_to_coarse(s, v);
    for (int k = 0; k < v.class_count(); ++k) {
      double best = -1e300;
      for (int r : groups[k]) best = std::max(best, s[r]);
      EXPECT_EQ(c[k], best);
    }
    // A strictly increasing map commutes with the max.
    const auto c2 = fine_to_coarse(s.array().exp().matrix(), v);
    for (int k = 0; k < v.class_count(); ++k) EXPECT_NEAR(c2[k], std::exp(c[k]), 1e-12);
  }
}

TEST(Prototypes, UnitMeanOfClassRows) {
  const auto v = build_prompts({"car", "terrain"}, PromptStyle::B);
  const auto e = mock_embeddings(v, 16, 2);
  const auto p = class_prototypes(e, 2);
  EXPECT_NEAR((p.row(0) - e.embeddings.row(0)).norm(), 0.0, 1e-12);
  Eigen::RowVectorXd m = e.embeddings.bottomRows(6).colwise().sum();
  EXPECT_NEAR((p.row(1) - m.normalized()).norm(), 0.0, 1e-12);
}
