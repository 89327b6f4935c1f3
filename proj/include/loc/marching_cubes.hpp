#pragma once

// Marching cubes over a regular scalar lattice. The 256-case table is derived
// at start-up from per-face rules: on each cube face the iso-contour segments
// connect sign-changing edges, and on ambiguous faces the "inside" corners are
// cut off separately. The rule depends only on the face's own corners, so
// neighbouring cubes agree on shared faces and the surface has no cracks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "loc/geometry.hpp"
#include "loc/mesh.hpp"

namespace loc {

/// Node values at origin + spacing * (x, y, z); index (x * ny + y) * nz + z.
struct ScalarGrid {
  Vec3 origin = Vec3::Zero();
  double spacing = 1.0;
  int nx = 0, ny = 0, nz = 0;
  std::vector<double> values;

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * ny + y) * nz + z;
  }
  double at(int x, int y, int z) const { return values[index(x, y, z)]; }
  Vec3 position(int x, int y, int z) const { return origin + spacing * Vec3(x, y, z); }

  /// Trilinear interpolation, clamped to the lattice.
  double sample(const Vec3& p) const {
    const Vec3 g = (p - origin) / spacing;
    auto split = [](double v, int n, int& i0, double& t) {
      v = std::clamp(v, 0.0, static_cast<double>(n - 1));
      i0 = std::min(static_cast<int>(std::floor(v)), n - 2);
      t = v - i0;
    };
    int x0, y0, z0;
    double tx, ty, tz;
    split(g.x(), nx, x0, tx);
    split(g.y(), ny, y0, ty);
    split(g.z(), nz, z0, tz);
    double acc = 0.0;
    for (int c = 0; c < 8; ++c) {
      const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
      const double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) * (dz ? tz : 1 - tz);
      acc += w * at(x0 + dx, y0 + dy, z0 + dz);
    }
    return acc;
  }
};

namespace mc {

// Corner c sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
inline constexpr std::array<std::array<int, 2>, 12> kEdgeCorners = {{
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // along x
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // along y
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // along z
}};

inline constexpr std::array<std::array<int, 4>, 6> kFaces = {{
    {0, 2, 6, 4}, {1, 3, 7, 5}, {0, 1, 5, 4}, {2, 3, 7, 6}, {0, 1, 3, 2}, {4, 5, 7, 6},
}};

inline int edge_between(int a, int b) {
  for (int e = 0; e < 12; ++e) {
    const auto& ec = kEdgeCorners[e];
    if ((ec[0] == a && ec[1] == b) || (ec[0] == b && ec[1] == a)) return e;
  }
  return -1;
}

inline Vec3 corner_offset(int c) { return Vec3(c & 1, (c >> 1) & 1, (c >> 2) & 1); }

using Table = std::array<std::vector<std::array<int, 3>>, 256>;

inline Table build_table() {
  Table table;
  for (int mask = 0; mask < 256; ++mask) {
    auto inside = [&](int c) { return ((mask >> c) & 1) != 0; };
    std::array<std::vector<int>, 12> adj;
    auto link = [&](int a, int b) {
      adj[a].push_back(b);
      adj[b].push_back(a);
    };
    for (const auto& f : kFaces) {
      std::vector<int> crossing;
      for (int s = 0; s < 4; ++s)
        if (inside(f[s]) != inside(f[(s + 1) % 4])) crossing.push_back(edge_between(f[s], f[(s + 1) % 4]));
      if (crossing.size() == 2) {
        link(crossing[0], crossing[1]);
      } else if (crossing.size() == 4) {
        // Diagonal corners share a state; cut each inside corner off on its own.
        const int a = inside(f[0]) ? 0 : 1;
        for (int corner : {a, a + 2}) {
          const int prev = (corner + 3) % 4, next = (corner + 1) % 4;
          link(edge_between(f[prev], f[corner]), edge_between(f[corner], f[next]));
        }
      }
    }
    std::array<bool, 12> seen{};
    for (int start = 0; start < 12; ++start) {
      if (seen[start] || adj[start].empty()) continue;
      std::vector<int> loop{start};
      seen[start] = true;
      int prev = start, cur = adj[start][0];
      while (cur != start) {
        loop.push_back(cur);
        seen[cur] = true;
        const int next = adj[cur][0] == prev ? adj[cur][1] : adj[cur][0];
        prev = cur;
        cur = next;
      }
      // Orient so the polygon normal points from inside corners to outside ones.
      Vec3 normal = Vec3::Zero(), in_c = Vec3::Zero(), out_c = Vec3::Zero();
      std::vector<Vec3> mid;
      for (int e : loop) {
        const auto& ec = kEdgeCorners[e];
        mid.push_back(0.5 * (corner_offset(ec[0]) + corner_offset(ec[1])));
        const int ci = inside(ec[0]) ? ec[0] : ec[1];
        const int co = inside(ec[0]) ? ec[1] : ec[0];
        in_c += corner_offset(ci);
        out_c += corner_offset(co);
      }
      for (std::size_t v = 0; v < mid.size(); ++v) normal += mid[v].cross(mid[(v + 1) % mid.size()]);
      if (normal.dot(out_c - in_c) < 0) std::reverse(loop.begin(), loop.end());
      for (std::size_t v = 1; v + 1 < loop.size(); ++v) table[mask].push_back({loop[0], loop[v], loop[v + 1]});
    }
  }
  return table;
}

inline const Table& table() {
  static const Table t = build_table();
  return t;
}

}  // namespace mc

/// Isosurface at `iso`; nodes with value >= iso count as inside. Vertices on
/// shared lattice edges are shared; degenerate triangles are dropped.
inline TriangleMesh marching_cubes(const ScalarGrid& grid, double iso) {
  require(grid.nx >= 2 && grid.ny >= 2 && grid.nz >= 2, "marching_cubes: lattice too small");
  require(grid.values.size() == static_cast<std::size_t>(grid.nx) * grid.ny * grid.nz,
          "marching_cubes: value count mismatch");
  const auto& table = mc::table();
  TriangleMesh mesh;
  std::unordered_map<std::int64_t, int> vertex_of_edge;

  auto vertex = [&](int x, int y, int z, int edge) {
    const auto& ec = mc::kEdgeCorners[edge];
    const int a = ec[0], b = ec[1];
    const int ax = x + (a & 1), ay = y + ((a >> 1) & 1), az = z + ((a >> 2) & 1);
    const int axis = edge / 4;
    const std::int64_t key = static_cast<std::int64_t>(grid.index(ax, ay, az)) * 3 + axis;
    if (auto it = vertex_of_edge.find(key); it != vertex_of_edge.end()) return it->second;
    const int bx = x + (b & 1), by = y + ((b >> 1) & 1), bz = z + ((b >> 2) & 1);
    const double va = grid.at(ax, ay, az), vb = grid.at(bx, by, bz);
    double t = (va == vb) ? 0.5 : (iso - va) / (vb - va);
    t = std::clamp(t, 0.0, 1.0);
    const Vec3 p = grid.position(ax, ay, az) + t * (grid.position(bx, by, bz) - grid.position(ax, ay, az));
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    vertex_of_edge.emplace(key, id);
    return id;
  };

  for (int x = 0; x + 1 < grid.nx; ++x)
    for (int y = 0; y + 1 < grid.ny; ++y)
      for (int z = 0; z + 1 < grid.nz; ++z) {
        int mask = 0;
        for (int c = 0; c < 8; ++c)
          if (grid.at(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1)) >= iso) mask |= 1 << c;
        if (mask == 0 || mask == 255) continue;
        for (const auto& tri : table[mask])
          mesh.triangles.push_back({vertex(x, y, z, tri[0]), vertex(x, y, z, tri[1]), vertex(x, y, z, tri[2])});
      }
  mesh.remove_degenerate();
  return mesh;
}

}  // namespace loc
