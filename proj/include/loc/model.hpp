#pragma once

// Per-voxel MLPs with hand-written backward passes. Rows of every matrix are
// samples (voxels), columns are channels.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "loc/error.hpp"
#include "loc/random.hpp"

namespace loc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { Softplus, Relu };

inline std::string to_string(Activation a) { return a == Activation::Softplus ? "softplus" : "relu"; }
inline Activation parse_activation(const std::string& s) {
  if (s == "softplus") return Activation::Softplus;
  if (s == "relu") return Activation::Relu;
  throw ValidationError("unknown activation '" + s + "'");
}

// softplus_beta(x) = log(1 + exp(beta x)) / beta, evaluated without overflow.
inline double softplus(double x, double beta) {
  const double z = beta * x;
  return (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) / beta;
}
inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

struct Linear {
  MatrixXd weight;  // in x out
  VectorXd bias;    // out

  int in_width() const { return static_cast<int>(weight.rows()); }
  int out_width() const { return static_cast<int>(weight.cols()); }
};

class Mlp {
 public:
  std::vector<Linear> layers;
  Activation activation = Activation::Softplus;
  double beta = 10.0;
  bool activate_output = false;

  Mlp() = default;

  /// widths = {in, hidden..., out}. Weights ~ N(0, 2 / fan_in), biases zero.
  static Mlp make(const std::vector<int>& widths, Rng& rng, Activation act = Activation::Softplus,
                  bool activate_output = false) {
    require(widths.size() >= 2, "Mlp: need at least input and output widths");
    Mlp m;
    m.activation = act;
    m.activate_output = activate_output;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      require(widths[l] > 0 && widths[l + 1] > 0, "Mlp: widths must be positive");
      Linear lin{MatrixXd(widths[l], widths[l + 1]), VectorXd::Zero(widths[l + 1])};
      const double sd = std::sqrt(2.0 / widths[l]);
      for (Eigen::Index i = 0; i < lin.weight.size(); ++i) lin.weight.data()[i] = sd * rng.normal();
      m.layers.push_back(std::move(lin));
    }
    return m;
  }

  int in_width() const { return layers.front().in_width(); }
  int out_width() const { return layers.back().out_width(); }

  struct Cache {
    std::vector<MatrixXd> inputs;  // input of each layer
    std::vector<MatrixXd> pre;     // pre-activation of each layer
  };

  MatrixXd forward(const MatrixXd& x, Cache* cache = nullptr) const {
    require(!layers.empty(), "Mlp: no layers");
    require(x.cols() == in_width(), "Mlp: input width " + std::to_string(x.cols()) + " != " +
                                        std::to_string(in_width()));
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
    }
    MatrixXd h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      MatrixXd z = h * layers[l].weight;
      z.rowwise() += layers[l].bias.transpose();
      if (cache) {
        cache->inputs.push_back(h);
        cache->pre.push_back(z);
      }
      h = activated(l) ? act(z) : z;
    }
    return h;
  }

  /// Accumulates parameter gradients into `grad` (same shapes) and returns dL/dx.
  MatrixXd backward(const Cache& cache, const MatrixXd& d_out, Mlp& grad) const {
    MatrixXd d = d_out;
    for (std::size_t l = layers.size(); l-- > 0;) {
      if (activated(l)) d = d.cwiseProduct(act_grad(cache.pre[l]));
      grad.layers[l].weight.noalias() += cache.inputs[l].transpose() * d;
      grad.layers[l].bias += d.colwise().sum().transpose();
      d = (d * layers[l].weight.transpose()).eval();
    }
    return d;
  }

  Mlp zeros_like() const {
    Mlp g = *this;
    for (auto& l : g.layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
    return g;
  }

  /// Views of every parameter block, in a fixed order.
  std::vector<std::span<double>> parameters() {
    std::vector<std::span<double>> out;
    for (auto& l : layers) {
      out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
      out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
    return out;
  }

 private:
  bool activated(std::size_t l) const { return l + 1 < layers.size() || activate_output; }

  MatrixXd act(const MatrixXd& z) const {
    if (activation == Activation::Relu) return z.cwiseMax(0.0);
    const double b = beta;
    return z.unaryExpr([b](double v) { return softplus(v, b); });
  }
  MatrixXd act_grad(const MatrixXd& z) const {
    if (activation == Activation::Relu) return z.unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; });
    const double b = beta;
    return z.unaryExpr([b](double v) { return sigmoid(b * v); });
  }
};

/// Feature network M followed by the occupancy head and the language head.
struct DualHeadModel {
  Mlp feature_net;  // C_in -> C_v, output activated
  Mlp occ_head;     // C_v -> K
  Mlp lang_head;    // C_v -> C_o

  struct Config {
    int input_width = 0;
    int feature_width = 64;  // C_v
    int hidden_width = 64;
    int num_classes = 0;     // K, known classes + FREE
    int embed_width = 0;     // C_o
    Activation activation = Activation::Softplus;
  };

  static DualHeadModel make(const Config& c, std::uint64_t seed) {
    require(c.input_width > 0 && c.feature_width > 0 && c.hidden_width > 0 && c.num_classes > 1 &&
                c.embed_width > 0,
            "DualHeadModel: invalid widths");
    Rng rng(seed);
    DualHeadModel m;
    m.feature_net = Mlp::make({c.input_width, c.hidden_width, c.feature_width}, rng, c.activation, true);
    m.occ_head = Mlp::make({c.feature_width, c.hidden_width, c.num_classes}, rng, c.activation);
    m.lang_head = Mlp::make({c.feature_width, c.hidden_width, c.embed_width}, rng, c.activation);
    m.validate();
    return m;
  }

  int input_width() const { return feature_net.in_width(); }
  int feature_width() const { return feature_net.out_width(); }
  int num_classes() const { return occ_head.out_width(); }
  int embed_width() const { return lang_head.out_width(); }

  void validate() const {
    require(occ_head.in_width() == feature_width() && lang_head.in_width() == feature_width(),
            "DualHeadModel: head input width != feature width");
  }

  struct Output {
    MatrixXd features;    // V, N x C_v
    MatrixXd occ_logits;  // N x K
    MatrixXd text;        // V_text, N x C_o
  };
  struct Cache {
    Mlp::Cache feature, occ, lang;
  };

  Output forward(const MatrixXd& x, Cache* cache = nullptr) const {
    Output o;
    o.features = feature_net.forward(x, cache ? &cache->feature : nullptr);
    o.occ_logits = occ_head.forward(o.features, cache ? &cache->occ : nullptr);
    o.text = lang_head.forward(o.features, cache ? &cache->lang : nullptr);
    return o;
  }

  /// Accumulates gradients for dL/d(occ_logits) and dL/d(text); returns dL/dx.
  MatrixXd backward(const Cache& cache, const MatrixXd& d_occ, const MatrixXd& d_text,
                    DualHeadModel& grad) const {
    MatrixXd d_feat = occ_head.backward(cache.occ, d_occ, grad.occ_head);
    d_feat += lang_head.backward(cache.lang, d_text, grad.lang_head);
    return feature_net.backward(cache.feature, d_feat, grad.feature_net);
  }

  DualHeadModel zeros_like() const {
    return {feature_net.zeros_like(), occ_head.zeros_like(), lang_head.zeros_like()};
  }

  std::vector<std::span<double>> parameters() {
    auto out = feature_net.parameters();
    for (auto* m : {&occ_head, &lang_head}) {
      auto p = m->parameters();
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }
};

}  // namespace loc
