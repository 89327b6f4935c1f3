#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <span>
#include <unordered_map>
#include <vector>

#include "loc/error.hpp"
#include "loc/geometry.hpp"

namespace loc {

struct Neighbor {
  int index = -1;
  double dist2 = 0.0;
  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// k nearest by exhaustive scan, ordered by (distance, index).
inline std::vector<Neighbor> brute_force_knn(std::span<const Vec3> points, const Vec3& q, int k) {
  std::vector<Neighbor> all;
  all.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    all.push_back({static_cast<int>(i), (points[i] - q).squaredNorm()});
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end());
  all.resize(n);
  return all;
}

/// Exact k-NN over a uniform spatial hash (cell = 2x mean point spacing).
/// Below kBruteForceThreshold points every query is a plain scan.
class PointIndex {
 public:
  static constexpr std::size_t kBruteForceThreshold = 512;

  explicit PointIndex(std::vector<Vec3> points) : points_(std::move(points)) {
    if (points_.size() < kBruteForceThreshold) return;
    Vec3 lo = points_.front(), hi = points_.front();
    for (const auto& p : points_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec3 ext = (hi - lo).cwiseMax(1e-9);
    // Points usually sample surfaces, so estimate spacing from the two largest extents.
    Vec3 sorted = ext;
    std::sort(sorted.data(), sorted.data() + 3);
    const double area = sorted[1] * sorted[2];
    const double spacing = std::sqrt(area / static_cast<double>(points_.size()));
    cell_ = std::max(2.0 * spacing, 1e-9);
    origin_ = lo;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const auto c = cell_of(points_[i]);
      cells_[key(c)].push_back(static_cast<int>(i));
      cmin_ = i == 0 ? c : min3(cmin_, c);
      cmax_ = i == 0 ? c : max3(cmax_, c);
    }
  }

  std::size_t size() const { return points_.size(); }
  std::span<const Vec3> points() const { return points_; }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  std::vector<Neighbor> knn(const Vec3& q, int k) const {
    if (k <= 0 || points_.empty()) return {};
    if (cells_.empty()) return brute_force_knn(points_, q, k);

    const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(k), points_.size());
    std::priority_queue<Neighbor> heap;  // max-heap on (dist2, index)
    const auto qc = cell_of(q);
    const int max_ring = std::max({std::abs(qc[0] - cmin_[0]), std::abs(qc[0] - cmax_[0]),
                                   std::abs(qc[1] - cmin_[1]), std::abs(qc[1] - cmax_[1]),
                                   std::abs(qc[2] - cmin_[2]), std::abs(qc[2] - cmax_[2])});
    for (int r = 0; r <= max_ring; ++r) {
      visit_ring(qc, r, [&](const std::vector<int>& bucket) {
        for (int idx : bucket) {
          const Neighbor n{idx, (points_[idx] - q).squaredNorm()};
          if (heap.size() < want) {
            heap.push(n);
          } else if (n < heap.top()) {
            heap.pop();
            heap.push(n);
          }
        }
      });
      // Anything outside rings 0..r is at least r cells away.
      if (heap.size() == want) {
        const double reach = r * cell_;
        if (heap.top().dist2 < reach * reach) break;
      }
    }
    std::vector<Neighbor> out;
    out.reserve(heap.size());
    while (!heap.empty()) {
      out.push_back(heap.top());
      heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  using Cell = std::array<int, 3>;

  static Cell min3(const Cell& a, const Cell& b) {
    return {std::min(a[0], b[0]), std::min(a[1], b[1]), std::min(a[2], b[2])};
  }
  static Cell max3(const Cell& a, const Cell& b) {
    return {std::max(a[0], b[0]), std::max(a[1], b[1]), std::max(a[2], b[2])};
  }

  Cell cell_of(const Vec3& p) const {
    const Vec3 r = (p - origin_) / cell_;
    auto clampi = [](double v) {
      return static_cast<int>(std::clamp(std::floor(v), -1.0e6, 1.0e6));
    };
    return {clampi(r.x()), clampi(r.y()), clampi(r.z())};
  }

  static std::int64_t key(const Cell& c) {
    constexpr std::int64_t kOff = 1 << 20;
    return ((c[0] + kOff) << 42) | ((c[1] + kOff) << 21) | (c[2] + kOff);
  }

  template <typename F>
  void visit_ring(const Cell& c, int r, F&& f) const {
    auto visit = [&](int x, int y, int z) {
      if (x < cmin_[0] || y < cmin_[1] || z < cmin_[2] || x > cmax_[0] || y > cmax_[1] || z > cmax_[2]) return;
      auto it = cells_.find(key({x, y, z}));
      if (it != cells_.end()) f(it->second);
    };
    if (r == 0) {
      visit(c[0], c[1], c[2]);
      return;
    }
    for (int dx = -r; dx <= r; ++dx)
      for (int dy = -r; dy <= r; ++dy) {
        if (std::abs(dx) == r || std::abs(dy) == r) {
          for (int dz = -r; dz <= r; ++dz) visit(c[0] + dx, c[1] + dy, c[2] + dz);
        } else {
          visit(c[0] + dx, c[1] + dy, c[2] - r);
          visit(c[0] + dx, c[1] + dy, c[2] + r);
        }
      }
  }

  std::vector<Vec3> points_;
  double cell_ = 1.0;
  Vec3 origin_ = Vec3::Zero();
  Cell cmin_{}, cmax_{};
  std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

}  // namespace loc
