#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Core>

#include "loc/error.hpp"

namespace loc {

/// Row-major dense tensor of doubles.
struct TensorF {
  std::vector<std::size_t> dims;
  std::vector<double> data;

  TensorF() = default;
  explicit TensorF(std::vector<std::size_t> d, double fill = 0.0) : dims(std::move(d)) {
    for (auto n : dims) require(n > 0, "TensorF: dims must be positive");
    data.assign(count(dims), fill);
  }

  static std::size_t count(const std::vector<std::size_t>& d) {
    return std::accumulate(d.begin(), d.end(), std::size_t{1}, std::multiplies<>());
  }
  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return dims.size(); }

  template <class... I>
  double& operator()(I... idx) { return data[offset({static_cast<std::size_t>(idx)...})]; }
  template <class... I>
  double operator()(I... idx) const { return data[offset({static_cast<std::size_t>(idx)...})]; }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    require(idx.size() == dims.size(), "TensorF: index rank mismatch");
    std::size_t off = 0, d = 0;
    for (auto i : idx) {
      require(i < dims[d], "TensorF: index out of range");
      off = off * dims[d++] + i;
    }
    return off;
  }

  void validate() const {
    require(data.size() == count(dims), "TensorF: data size != product of dims");
    for (double v : data) require(std::isfinite(v), "TensorF: non-finite value");
  }

  /// Rank-2 view as an Eigen row-major matrix copy.
  Eigen::MatrixXd matrix() const {
    require(dims.size() == 2, "TensorF: matrix() needs rank 2");
    Eigen::MatrixXd m(dims[0], dims[1]);
    for (std::size_t r = 0; r < dims[0]; ++r)
      for (std::size_t c = 0; c < dims[1]; ++c) m(r, c) = data[r * dims[1] + c];
    return m;
  }

  static TensorF from_matrix(const Eigen::MatrixXd& m) {
    TensorF t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) t.data[r * m.cols() + c] = m(r, c);
    return t;
  }

  friend bool operator==(const TensorF&, const TensorF&) = default;
};

}  // namespace loc
