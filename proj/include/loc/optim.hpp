#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "loc/error.hpp"

namespace loc {

struct AdamWParams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // global gradient norm; <= 0 disables

  void validate() const {
    require(lr > 0 && eps > 0 && weight_decay >= 0, "AdamWParams: invalid lr, eps or weight decay");
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "AdamWParams: betas must be in [0, 1)");
  }
};

/// Adam with decoupled weight decay and global-norm gradient clipping.
class AdamW {
 public:
  explicit AdamW(AdamWParams p) : p_(p) { p_.validate(); }

  const AdamWParams& params() const { return p_; }
  long steps() const { return t_; }

  /// Returns the gradient norm before clipping.
  double step(std::vector<std::span<double>> params, std::vector<std::span<double>> grads) {
    require(params.size() == grads.size(), "AdamW: parameter/gradient block count mismatch");
    if (m_.empty()) {
      for (const auto& g : grads) {
        m_.emplace_back(g.size(), 0.0);
        v_.emplace_back(g.size(), 0.0);
      }
    }
    require(m_.size() == grads.size(), "AdamW: parameter layout changed");
    double sq = 0.0;
    for (std::size_t b = 0; b < grads.size(); ++b) {
      require(params[b].size() == grads[b].size() && m_[b].size() == grads[b].size(),
              "AdamW: block size mismatch");
      for (double g : grads[b]) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericalError("AdamW: non-finite gradient");
    const double scale = (p_.clip_norm > 0 && norm > p_.clip_norm) ? p_.clip_norm / norm : 1.0;
    ++t_;
    const double bc1 = 1.0 - std::pow(p_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(p_.beta2, static_cast<double>(t_));
    for (std::size_t b = 0; b < grads.size(); ++b)
      for (std::size_t i = 0; i < grads[b].size(); ++i) {
        const double g = grads[b][i] * scale;
        double& m = m_[b][i];
        double& v = v_[b][i];
        m = p_.beta1 * m + (1 - p_.beta1) * g;
        v = p_.beta2 * v + (1 - p_.beta2) * g * g;
        double& w = params[b][i];
        w -= p_.lr * p_.weight_decay * w;
        w -= p_.lr * (m / bc1) / (std::sqrt(v / bc2) + p_.eps);
      }
    return norm;
  }

 private:
  AdamWParams p_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace loc
