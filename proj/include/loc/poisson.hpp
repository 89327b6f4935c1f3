#pragma once

// Poisson surface reconstruction on a regular lattice.
//
// The oriented points define a vector field V (normals weighted by a local
// area estimate, splatted trilinearly onto the edge midpoints of the lattice).
// The indicator chi is the least-squares fit of grad(chi) = V, i.e. the normal
// equations G^T G chi = G^T V with G the forward-difference gradient. That is
// the discrete form of lap(chi) = div(V) with zero-flux boundaries, so open
// surfaces do not grow spurious sheets near the domain boundary.

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <vector>

#include "loc/error.hpp"
#include "loc/knn.hpp"
#include "loc/marching_cubes.hpp"
#include "loc/mesh.hpp"

namespace loc {

struct PoissonOptions {
  int grid_res = 64;
  double tolerance = 1e-6;
  int max_iterations = 0;  // 0: 10 * grid_res
  int padding_cells = -1;  // -1: max(2, grid_res / 10)
  int density_k = 8;
};

struct PoissonDiagnostics {
  int iterations = 0;
  double relative_residual = 0.0;
  double iso_value = 0.0;          // mean chi over the input points
  double chi_stddev_at_points = 0.0;
  Vec3 lattice_origin = Vec3::Zero();
  double lattice_spacing = 0.0;
};

struct PoissonResult {
  TriangleMesh mesh;
  PoissonDiagnostics diagnostics;
  ScalarGrid chi;
};

namespace detail {

inline void require_not_degenerate(const std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov, Eigen::EigenvaluesOnly);
  const Vec3 ev = es.eigenvalues();  // ascending
  require(ev(2) > 0 && ev(1) > 1e-12 * ev(2), "poisson_reconstruct: degenerate input (collinear points)");
}

// Per-point area estimate pi r^2 / k from the distance to the k-th neighbour.
inline std::vector<double> area_weights(const std::vector<Vec3>& pts, int k) {
  k = std::min<int>(k, static_cast<int>(pts.size()) - 1);
  PointIndex index(pts);
  std::vector<double> w(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto nn = index.knn(pts[i], k + 1);
    w[i] = M_PI * nn.back().dist2 / k;
  }
  return w;
}

}  // namespace detail

inline PoissonResult poisson_reconstruct(const OrientedPointCloud& cloud, const PoissonOptions& opt = {}) {
  cloud.validate();
  require(cloud.size() >= 10, "poisson_reconstruct: need at least 10 oriented points");
  require(opt.grid_res >= 8, "poisson_reconstruct: grid_res must be >= 8");
  require(opt.tolerance > 0, "poisson_reconstruct: tolerance must be positive");
  for (const auto& p : cloud.positions) require(p.allFinite(), "poisson_reconstruct: non-finite point");
  detail::require_not_degenerate(cloud.positions);

  const int R = opt.grid_res;
  const int pad = opt.padding_cells >= 0 ? opt.padding_cells : std::max(2, R / 10);
  require(R - 1 - 2 * pad >= 2, "poisson_reconstruct: padding leaves no interior");
  Vec3 lo = cloud.positions[0], hi = lo;
  for (const auto& p : cloud.positions) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  const double h = extent / (R - 1 - 2 * pad);
  const Vec3 origin = 0.5 * (lo + hi) - Vec3::Constant(0.5 * h * (R - 1));

  ScalarGrid grid;
  grid.origin = origin;
  grid.spacing = h;
  grid.nx = grid.ny = grid.nz = R;
  const std::size_t n_nodes = static_cast<std::size_t>(R) * R * R;
  auto node = [R](int x, int y, int z) { return (static_cast<std::size_t>(x) * R + y) * R + z; };

  // Edge field V_a lives on edges (x, x + e_a), stored at the index of x.
  const auto area = detail::area_weights(cloud.positions, opt.density_k);
  std::array<std::vector<double>, 3> V;
  for (auto& v : V) v.assign(n_nodes, 0.0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 g0 = (cloud.positions[i] - origin) / h;
    for (int a = 0; a < 3; ++a) {
      Vec3 g = g0;
      g(a) -= 0.5;
      const int x0 = static_cast<int>(std::floor(g.x()));
      const int y0 = static_cast<int>(std::floor(g.y()));
      const int z0 = static_cast<int>(std::floor(g.z()));
      const Vec3 t = g - Vec3(x0, y0, z0);
      const double amount = area[i] * cloud.normals[i](a) / (h * h * h);
      for (int c = 0; c < 8; ++c) {
        const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
        const int x = x0 + dx, y = y0 + dy, z = z0 + dz;
        const int lim[3] = {a == 0 ? R - 1 : R, a == 1 ? R - 1 : R, a == 2 ? R - 1 : R};
        if (x < 0 || y < 0 || z < 0 || x >= lim[0] || y >= lim[1] || z >= lim[2]) continue;
        const double w = (dx ? t.x() : 1 - t.x()) * (dy ? t.y() : 1 - t.y()) * (dz ? t.z() : 1 - t.z());
        V[a][node(x, y, z)] += w * amount;
      }
    }
  }

  // Right-hand side h^2 G^T V and the operator h^2 G^T G (graph Laplacian).
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_nodes));
  for (int x = 0; x < R; ++x)
    for (int y = 0; y < R; ++y)
      for (int z = 0; z < R; ++z) {
        const int c[3] = {x, y, z};
        double acc = 0.0;
        for (int a = 0; a < 3; ++a) {
          int m[3] = {x, y, z};
          if (c[a] + 1 < R) acc -= V[a][node(x, y, z)];
          if (c[a] > 0) {
            m[a] -= 1;
            acc += V[a][node(m[0], m[1], m[2])];
          }
        }
        b(static_cast<Eigen::Index>(node(x, y, z))) = h * acc;
      }
  b.array() -= b.mean();

  auto apply = [&](const Eigen::VectorXd& u, Eigen::VectorXd& out) {
    for (int x = 0; x < R; ++x)
      for (int y = 0; y < R; ++y)
        for (int z = 0; z < R; ++z) {
          const std::size_t id = node(x, y, z);
          const double ui = u(id);
          double acc = 0.0;
          if (x > 0) acc += ui - u(node(x - 1, y, z));
          if (x + 1 < R) acc += ui - u(node(x + 1, y, z));
          if (y > 0) acc += ui - u(node(x, y - 1, z));
          if (y + 1 < R) acc += ui - u(node(x, y + 1, z));
          if (z > 0) acc += ui - u(node(x, y, z - 1));
          if (z + 1 < R) acc += ui - u(node(x, y, z + 1));
          out(id) = acc;
        }
  };

  const double b_norm = b.norm();
  if (!(b_norm > 0) || !std::isfinite(b_norm))
    throw NumericalError("poisson_reconstruct: normal field has no divergence");
  const int max_it = opt.max_iterations > 0 ? opt.max_iterations : 10 * R;
  Eigen::VectorXd chi = Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd r = b, p = r, Ap(b.size());
  double rr = r.squaredNorm();
  int it = 0;
  while (std::sqrt(rr) > opt.tolerance * b_norm) {
    if (it >= max_it)
      throw NumericalError("poisson_reconstruct: conjugate gradient did not converge in " +
                           std::to_string(max_it) + " iterations");
    apply(p, Ap);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0)) throw NumericalError("poisson_reconstruct: conjugate gradient breakdown");
    const double alpha = rr / pAp;
    chi += alpha * p;
    r -= alpha * Ap;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    ++it;
  }
  chi.array() -= chi.mean();
  grid.values.assign(chi.data(), chi.data() + chi.size());

  PoissonResult out;
  out.diagnostics.iterations = it;
  out.diagnostics.relative_residual = std::sqrt(rr) / b_norm;
  out.diagnostics.lattice_origin = origin;
  out.diagnostics.lattice_spacing = h;
  double sum = 0.0, sum2 = 0.0;
  for (const auto& p_i : cloud.positions) {
    const double v = grid.sample(p_i);
    sum += v;
    sum2 += v * v;
  }
  const double n = static_cast<double>(cloud.size());
  out.diagnostics.iso_value = sum / n;
  out.diagnostics.chi_stddev_at_points = std::sqrt(std::max(0.0, sum2 / n - (sum / n) * (sum / n)));
  out.mesh = marching_cubes(grid, out.diagnostics.iso_value);
  if (out.mesh.empty()) throw NumericalError("poisson_reconstruct: isosurface is empty");
  out.chi = std::move(grid);
  return out;
}

inline PoissonResult poisson_reconstruct(const OrientedPointCloud& cloud, int grid_res) {
  PoissonOptions opt;
  opt.grid_res = grid_res;
  return poisson_reconstruct(cloud, opt);
}

}  // namespace loc
