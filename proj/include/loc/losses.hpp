#pragma once

// Training losses with analytic gradients. Every loss returns its value and
// the gradient with respect to its first (prediction) argument.

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "loc/error.hpp"

namespace loc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct LossResult {
  double value = 0.0;
  MatrixXd grad;
};

/// Row-wise softmax via max-shifted exponentials.
inline MatrixXd softmax_rows(const MatrixXd& logits) {
  MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

inline double log_sum_exp(const Eigen::RowVectorXd& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

/// Cross-entropy averaged over rows whose target is >= 0 (negative = ignore).
/// With `class_weights`, a weighted mean (sum w_t * nll) / (sum w_t).
inline LossResult loss_ce(const MatrixXd& logits, const std::vector<int>& targets,
                          const std::optional<VectorXd>& class_weights = std::nullopt) {
  require(static_cast<Eigen::Index>(targets.size()) == logits.rows(), "loss_ce: target count != rows");
  if (class_weights) require(class_weights->size() == logits.cols(), "loss_ce: weight count != K");
  LossResult r{0.0, MatrixXd::Zero(logits.rows(), logits.cols())};
  double norm = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int t = targets[i];
    if (t < 0) continue;
    require(t < logits.cols(), "loss_ce: invalid target " + std::to_string(t));
    norm += class_weights ? (*class_weights)(t) : 1.0;
  }
  require(norm > 0, "loss_ce: no supervised rows");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int t = targets[i];
    if (t < 0) continue;
    const auto row = logits.row(static_cast<Eigen::Index>(i));
    const double lse = log_sum_exp(row);
    const double w = (class_weights ? (*class_weights)(t) : 1.0) / norm;
    r.value += w * (lse - row(t));
    r.grad.row(static_cast<Eigen::Index>(i)) = w * (row.array() - lse).exp();
    r.grad(static_cast<Eigen::Index>(i), t) -= w;
  }
  return r;
}

/// Inverse-frequency class weights over the supervised targets, normalised to
/// mean 1 over the classes that occur. Absent classes get weight 0.
inline VectorXd inverse_frequency_weights(const std::vector<int>& targets, int num_classes) {
  VectorXd counts = VectorXd::Zero(num_classes);
  for (int t : targets)
    if (t >= 0) counts(t) += 1.0;
  VectorXd w = VectorXd::Zero(num_classes);
  int present = 0;
  for (int c = 0; c < num_classes; ++c)
    if (counts(c) > 0) {
      w(c) = 1.0 / counts(c);
      ++present;
    }
  require(present > 0, "inverse_frequency_weights: no targets");
  return w * (present / w.sum());
}

namespace detail {

// d cos(a, b) / d a for a single row.
inline Eigen::RowVectorXd cosine_grad(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, double& cos) {
  const double na = a.norm(), nb = b.norm();
  cos = a.dot(b) / (na * nb);
  return b / (na * nb) - cos * a / (na * na);
}

}  // namespace detail

/// (1 / N_s) sum over masked rows of (1 - cos(v_text, v_psi)).
inline LossResult loss_kd(const MatrixXd& v_text, const MatrixXd& v_psi, const std::vector<bool>& mask) {
  require(v_text.rows() == v_psi.rows() && v_text.cols() == v_psi.cols(), "loss_kd: shape mismatch");
  require(static_cast<Eigen::Index>(mask.size()) == v_text.rows(), "loss_kd: mask length != rows");
  std::size_t n = 0;
  for (bool m : mask) n += m;
  require(n > 0, "loss_kd: empty mask");
  LossResult r{0.0, MatrixXd::Zero(v_text.rows(), v_text.cols())};
  for (Eigen::Index i = 0; i < v_text.rows(); ++i) {
    if (!mask[i]) continue;
    require(v_psi.row(i).norm() > 0, "loss_kd: zero-norm target");
    const double nt = v_text.row(i).norm();
    if (!(nt > 0) || !std::isfinite(nt)) throw NumericalError("loss_kd: prediction has zero or non-finite norm");
    double cos = 0.0;
    const Eigen::RowVectorXd g = detail::cosine_grad(v_text.row(i), v_psi.row(i), cos);
    r.value += (1.0 - cos) / static_cast<double>(n);
    r.grad.row(i) = -g / static_cast<double>(n);
  }
  return r;
}

/// InfoNCE over cosine similarities to the (unit) rows of E:
/// -(1/N_v) sum_v log softmax_k(cos(f_v, e_k) / tau)[pos_v]. Rows with pos < 0
/// are ignored.
inline LossResult loss_dcl(const MatrixXd& f, const MatrixXd& E, const std::vector<int>& pos, double tau) {
  require(tau > 0, "loss_dcl: tau must be positive");
  require(f.cols() == E.cols(), "loss_dcl: embedding width mismatch");
  require(static_cast<Eigen::Index>(pos.size()) == f.rows(), "loss_dcl: target count != rows");
  for (Eigen::Index k = 0; k < E.rows(); ++k)
    require(std::abs(E.row(k).norm() - 1.0) <= 1e-6, "loss_dcl: E rows must be unit norm");
  std::size_t n = 0;
  for (int p : pos) {
    require(p < E.rows(), "loss_dcl: positive index out of range");
    n += p >= 0;
  }
  require(n > 0, "loss_dcl: no supervised rows");
  LossResult r{0.0, MatrixXd::Zero(f.rows(), f.cols())};
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    const int p = pos[i];
    if (p < 0) continue;
    const double nf = f.row(i).norm();
    if (!(nf > 0) || !std::isfinite(nf)) throw NumericalError("loss_dcl: feature has zero or non-finite norm");
    const Eigen::RowVectorXd s = (E * f.row(i).transpose()).transpose() / nf;  // cosines
    const Eigen::RowVectorXd z = s / tau;
    const double lse = log_sum_exp(z);
    r.value += (lse - z(p)) / static_cast<double>(n);
    Eigen::RowVectorXd g = (z.array() - lse).exp().matrix();
    g(p) -= 1.0;
    g /= tau * static_cast<double>(n);  // dL/ds
    r.grad.row(i) = (g * E - g.dot(s) * f.row(i) / nf) / nf;
  }
  return r;
}

/// Cosine regression to the positive row of E: mean of (1 - cos(f_v, e_pos)).
/// The plain-similarity alternative to loss_dcl; rows with pos < 0 are ignored.
inline LossResult loss_cossim(const MatrixXd& f, const MatrixXd& E, const std::vector<int>& pos) {
  require(f.cols() == E.cols(), "loss_cossim: embedding width mismatch");
  require(static_cast<Eigen::Index>(pos.size()) == f.rows(), "loss_cossim: target count != rows");
  MatrixXd targets = MatrixXd::Zero(f.rows(), f.cols());
  std::vector<bool> mask(pos.size(), false);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (pos[i] < 0) continue;
    require(pos[i] < E.rows(), "loss_cossim: positive index out of range");
    targets.row(static_cast<Eigen::Index>(i)) = E.row(pos[i]);
    mask[i] = true;
  }
  return loss_kd(f, targets, mask);
}

struct LossConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double tau1 = 0.5;
  double tau2 = 0.5;
  int num_classes = 0;  // K of the occupancy head

  void validate() const {
    require(lambda1 >= 0 && lambda2 >= 0, "LossConfig: lambdas must be >= 0");
    require(tau1 > 0 && tau2 > 0, "LossConfig: temperatures must be > 0");
  }
};

struct LossParts {
  double ce = 0.0;
  std::optional<double> kd;
  std::optional<double> dcl;
};

/// L_CE + lambda1 L_KD + lambda2 L_DCL; absent terms contribute nothing.
inline double loss_total(const LossParts& p, const LossConfig& cfg) {
  return p.ce + (p.kd ? cfg.lambda1 * *p.kd : 0.0) + (p.dcl ? cfg.lambda2 * *p.dcl : 0.0);
}

}  // namespace loc
