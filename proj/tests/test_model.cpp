#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "loc/losses.hpp"
#include "loc/model.hpp"
#include "loc/optim.hpp"
#include "loc/train.hpp"
#include "oracles.hpp"

using namespace loc;
using Eigen::MatrixXd;

TEST(Activation, SoftplusValues) {
  EXPECT_NEAR(softplus(0.0, 10.0), std::log(2.0) / 10.0, 1e-15);
  EXPECT_NEAR(softplus(100.0, 10.0), 100.0, 1e-12);
  EXPECT_NEAR(softplus(-100.0, 10.0), 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(softplus(1e6, 10.0)));
  EXPECT_NEAR(sigmoid(0.0), 0.5, 1e-15);
  EXPECT_EQ(parse_activation("relu"), Activation::Relu);
  EXPECT_THROW(parse_activation("tanh"), ValidationError);
}

TEST(Mlp, ForwardMatchesElementwiseLoops) {
  Rng rng(41);
  for (auto act : {Activation::Softplus, Activation::Relu}) {
    Mlp m = Mlp::make({4, 6, 3}, rng, act);
    for (auto& l : m.layers)
      for (auto& b : l.bias) b = rng.normal();
    const MatrixXd x = oracle::random_matrix(rng, 5, 4);
    const MatrixXd y = m.forward(x);
    for (int r = 0; r < 5; ++r) {
      std::vector<double> in(4);
      for (int c = 0; c < 4; ++c) in[c] = x(r, c);
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& L = m.layers[l];
        std::vector<double> out(L.out_width());
        for (int o = 0; o < L.out_width(); ++o) {
          double z = L.bias[o];
          for (int i = 0; i < L.in_width(); ++i) z += in[i] * L.weight(i, o);
          const bool hidden = l + 1 < m.layers.size();
          out[o] = !hidden ? z : (act == Activation::Relu ? std::max(z, 0.0) : softplus(z, 10.0));
        }
        in = out;
      }
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(y(r, c), in[c], 1e-12);
    }
  }
}

TEST(Mlp, RejectsWrongInputWidth) {
  Rng rng(42);
  const Mlp m = Mlp::make({3, 2}, rng);
  EXPECT_THROW(m.forward(MatrixXd::Zero(1, 4)), ValidationError);
}

TEST(DualHead, ShapesAndDeterministicInit) {
  DualHeadModel::Config c;
  c.input_width = 10;
  c.num_classes = 5;
  c.embed_width = 32;
  const auto a = DualHeadModel::make(c, 3), b = DualHeadModel::make(c, 3);
  EXPECT_EQ(a.feature_net.layers[0].weight, b.feature_net.layers[0].weight);
  const auto out = a.forward(MatrixXd::Ones(7, 10));
  EXPECT_EQ(out.features.cols(), 64);
  EXPECT_EQ(out.occ_logits.cols(), 5);
  EXPECT_EQ(out.text.cols(), 32);
  EXPECT_TRUE((out.features.array() >= 0).all());  // activated feature output
  c.num_classes = 1;
  EXPECT_THROW(DualHeadModel::make(c, 3), ValidationError);
}

TEST(LossValues, CrossEntropy) {
  MatrixXd z(3, 2);
  z << 0, 0, 2, 0, 5, 5;
  const auto r = loss_ce(z, {0, 1, -1});
  EXPECT_NEAR(r.value, 0.5 * (std::log(2.0) + std::log(1 + std::exp(2.0))), 1e-12);
  EXPECT_EQ(r.grad.row(2).norm(), 0.0);
  EXPECT_THROW(loss_ce(z, {-1, -1, -1}), ValidationError);
  EXPECT_THROW(loss_ce(z, {2, 0, 0}), ValidationError);
}

TEST(LossValues, WeightedCrossEntropyAndInverseFrequency) {
  const auto w = inverse_frequency_weights({0, 0, 1, -1}, 3);
  EXPECT_NEAR(w[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(w[1], 4.0 / 3.0, 1e-12);
  EXPECT_EQ(w[2], 0.0);
  MatrixXd z = MatrixXd::Zero(2, 2);
  Eigen::VectorXd cw(2);
  cw << 1.0, 3.0;
  EXPECT_NEAR(loss_ce(z, {0, 1}, cw).value, std::log(2.0), 1e-12);
}

TEST(LossValues, Distillation) {
  MatrixXd a(3, 2), b(3, 2);
  a << 1, 0, 1, 0, 2, 2;
  b << 3, 0, 0, 1, -1, -1;
  EXPECT_NEAR(loss_kd(a, b, {true, true, true}).value, (0.0 + 1.0 + 2.0) / 3.0, 1e-12);
  EXPECT_NEAR(loss_kd(a, b, {false, true, false}).value, 1.0, 1e-12);
  EXPECT_THROW(loss_kd(a, b, {false, false, false}), ValidationError);
}

TEST(LossValues, Contrastive) {
  const MatrixXd E = MatrixXd::Identity(2, 2);
  MatrixXd f(1, 2);
  f << 1, 0;
  EXPECT_NEAR(loss_dcl(f, E, {0}, 0.5).value, std::log(1 + std::exp(-2.0)), 1e-12);
  EXPECT_NEAR(loss_dcl(f, E, {1}, 0.5).value, std::log(1 + std::exp(2.0)), 1e-12);
  EXPECT_NEAR(loss_cossim(f, E, {1}).value, 1.0, 1e-12);
  EXPECT_THROW(loss_dcl(f, 2.0 * E, {0}, 0.5), ValidationError);
  EXPECT_THROW(loss_dcl(f, E, {0}, 0.0), ValidationError);
}

TEST(LossValues, TotalOmitsAbsentTerms) {
  LossConfig c;
  c.lambda1 = 2.0;
  c.lambda2 = 3.0;
  EXPECT_DOUBLE_EQ(loss_total({1.0, 0.5, 0.25}, c), 1.0 + 1.0 + 0.75);
  EXPECT_DOUBLE_EQ(loss_total({1.0, std::nullopt, 0.25}, c), 1.75);
  EXPECT_DOUBLE_EQ(loss_total({1.0, std::nullopt, std::nullopt}, c), 1.0);
}

TEST(LossProperties, ContrastiveScaleAndPermutationInvariance) {
  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const MatrixXd f = oracle::random_matrix(rng, 4, 6);
    const MatrixXd E = gradcheck::unit_rows(rng, 5, 6);
    const auto pos = gradcheck::random_targets(rng, 4, 5, false);
    const double c = rng.uniform(0.1, 10.0);
    const auto base = loss_dcl(f, E, pos, 0.3);
    const auto scaled = loss_dcl(c * f, E, pos, 0.3);
    EXPECT_NEAR(base.value, scaled.value, 1e-10);
    EXPECT_LT((base.grad - c * scaled.grad).cwiseAbs().maxCoeff(), 1e-9);
    // Reversing the anchors and remapping the positives changes nothing.
    const MatrixXd Er = E.colwise().reverse();
    std::vector<int> pr = pos;
    for (int& p : pr) p = 4 - p;
    EXPECT_NEAR(loss_dcl(f, Er, pr, 0.3).value, base.value, 1e-12);
    EXPECT_GE(base.value, 0.0);
    EXPECT_LE(base.value, std::log(5.0) + 2.0 / 0.3 + 1e-9);
  }
}

TEST(LossProperties, SoftmaxRowsSumToOne) {
  Rng rng(44);
  const MatrixXd p = softmax_rows(oracle::random_matrix(rng, 20, 7, 50.0));
  for (int r = 0; r < 20; ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
  EXPECT_TRUE(p.allFinite());
}

TEST(Gradients, CrossEntropy) {
  Rng rng(45);
  for (int i = 0; i < 25; ++i) {
    EXPECT_LT(gradcheck::ce(rng, false), 1e-4);
    EXPECT_LT(gradcheck::ce(rng, true), 1e-4);
  }
}

TEST(Gradients, Distillation) {
  Rng rng(46);
  for (int i = 0; i < 25; ++i) EXPECT_LT(gradcheck::kd(rng), 1e-4);
}

TEST(Gradients, Contrastive) {
  Rng rng(47);
  for (int i = 0; i < 25; ++i) {
    EXPECT_LT(gradcheck::dcl(rng), 1e-4);
    EXPECT_LT(gradcheck::cossim(rng), 1e-4);
  }
}

TEST(Gradients, FullModelBackprop) {
  Rng rng(48);
  for (int i = 0; i < 20; ++i) EXPECT_LT(gradcheck::full_model(rng), 1e-4);
  for (int i = 0; i < 5; ++i) EXPECT_LT(gradcheck::full_model(rng, RegionLoss::CosSim), 1e-4);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  AdamWParams p;
  p.lr = 0.1;
  p.weight_decay = 0.0;
  p.clip_norm = 0.0;
  AdamW opt(p);
  std::vector<double> w = {1.0, -2.0}, g = {0.5, -3.0};
  const double norm = opt.step({std::span<double>(w)}, {std::span<double>(g)});
  EXPECT_NEAR(norm, std::sqrt(0.25 + 9.0), 1e-12);
  EXPECT_NEAR(w[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_NEAR(w[1], -2.0 + 0.1 * 3.0 / (3.0 + 1e-8), 1e-12);
}

TEST(AdamW, DecoupledWeightDecayAndClipping) {
  AdamWParams p;
  p.lr = 0.1;
  p.weight_decay = 0.5;
  p.clip_norm = 1.0;
  AdamW opt(p);
  std::vector<double> w = {2.0}, g = {0.0};
  opt.step({std::span<double>(w)}, {std::span<double>(g)});
  EXPECT_NEAR(w[0], 2.0 * (1 - 0.05), 1e-12);
  std::vector<double> bad = {NAN};
  EXPECT_THROW(opt.step({std::span<double>(w)}, {std::span<double>(bad)}), NumericalError);
}

namespace {

// Two separable classes plus FREE; lifted feature is the class anchor.
struct Toy {
  VoxelDataset data;
  MatrixXd anchors;
  DualHeadModel model;
};

Toy make_toy(std::uint64_t seed) {
  Rng rng(seed);
  Toy t;
  t.anchors = gradcheck::unit_rows(rng, 2, 4);
  const int n = 90;
  t.data.inputs = MatrixXd::Zero(n, 6);
  t.data.kd_targets = MatrixXd::Zero(n, 4);
  for (int i = 0; i < n; ++i) {
    const int cls = i % 3;  // 0, 1 known; 2 FREE
    t.data.inputs(i, cls) = 1.0;
    t.data.inputs.row(i).tail(3) = 0.1 * oracle::random_matrix(rng, 1, 3);
    t.data.occ_targets.push_back(cls);
    t.data.dcl_targets.push_back(cls < 2 ? cls : -1);
    t.data.kd_mask.push_back(cls < 2);
    if (cls < 2) t.data.kd_targets.row(i) = t.anchors.row(cls);
  }
  DualHeadModel::Config c;
  c.input_width = 6;
  c.feature_width = c.hidden_width = 16;
  c.num_classes = 3;
  c.embed_width = 4;
  t.model = DualHeadModel::make(c, seed);
  return t;
}

TrainConfig toy_config(int epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 32;
  tc.optim.lr = 1e-2;
  return tc;
}

}  // namespace

TEST(Train, ZeroEpochsLeavesModelUnchanged) {
  auto t = make_toy(1);
  const auto before = t.model;
  const auto r = train(t.model, t.data, t.anchors, toy_config(0));
  EXPECT_TRUE(r.trace.empty());
  EXPECT_EQ(t.model.occ_head.layers[0].weight, before.occ_head.layers[0].weight);
}

TEST(Train, LossDecreasesAndIsDeterministic) {
  auto a = make_toy(2), b = make_toy(2);
  const auto ra = train(a.model, a.data, a.anchors, toy_config(60));
  const auto rb = train(b.model, b.data, b.anchors, toy_config(60));
  ASSERT_EQ(ra.trace.size(), 60u);
  EXPECT_LT(ra.trace.back().total, 0.5 * ra.trace.front().total);
  EXPECT_EQ(a.model.lang_head.layers[1].weight, b.model.lang_head.layers[1].weight);
  for (std::size_t e = 0; e < ra.trace.size(); ++e) EXPECT_EQ(ra.trace[e].total, rb.trace[e].total);
  EXPECT_TRUE(ra.trace.front().kd && ra.trace.front().dcl);
}

TEST(Train, DisabledTermsAreAbsentFromTrace) {
  auto t = make_toy(3);
  auto tc = toy_config(2);
  tc.loss.lambda1 = 0.0;
  tc.loss.lambda2 = 0.0;
  const auto r = train(t.model, t.data, t.anchors, tc);
  EXPECT_FALSE(r.trace[0].kd.has_value());
  EXPECT_FALSE(r.trace[0].dcl.has_value());
  EXPECT_DOUBLE_EQ(r.trace[0].total, r.trace[0].ce);
}

TEST(Train, DivergenceIsNumericalError) {
  auto t = make_toy(4);
  auto tc = toy_config(50);
  tc.optim.lr = 1e200;
  tc.optim.clip_norm = 0.0;
  EXPECT_THROW(train(t.model, t.data, t.anchors, tc), NumericalError);
}
