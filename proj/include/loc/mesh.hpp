#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <vector>

#include "loc/error.hpp"
#include "loc/geometry.hpp"

namespace loc {

struct OrientedPointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;

  std::size_t size() const { return positions.size(); }

  void validate() const {
    require(positions.size() == normals.size(), "OrientedPointCloud: normal count != point count");
    for (const auto& n : normals)
      require(std::abs(n.norm() - 1.0) <= 1e-6, "OrientedPointCloud: normal is not unit length");
  }
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }

  double triangle_area(std::size_t t) const {
    const auto& f = triangles[t];
    return 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]).norm();
  }

  void validate() const {
    const int n = static_cast<int>(vertices.size());
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (int v : triangles[t]) require(v >= 0 && v < n, "TriangleMesh: index out of range");
      require(triangle_area(t) > 1e-12, "TriangleMesh: degenerate triangle");
    }
  }

  std::pair<Vec3, Vec3> bounds() const {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& v : vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    return {lo, hi};
  }

  /// Drops triangles with area <= min_area and vertices nothing references.
  void remove_degenerate(double min_area = 1e-12) {
    std::vector<std::array<int, 3>> kept;
    for (std::size_t t = 0; t < triangles.size(); ++t)
      if (triangle_area(t) > min_area) kept.push_back(triangles[t]);
    std::vector<int> remap(vertices.size(), -1);
    std::vector<Vec3> verts;
    for (auto& f : kept)
      for (int& v : f) {
        if (remap[v] < 0) {
          remap[v] = static_cast<int>(verts.size());
          verts.push_back(vertices[v]);
        }
        v = remap[v];
      }
    vertices = std::move(verts);
    triangles = std::move(kept);
  }
};

/// ASCII OBJ: "v x y z" lines then 1-indexed "f i j k" lines.
inline void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ValidationError("write_obj: cannot open " + path.string());
  os << std::setprecision(17);
  for (const auto& v : mesh.vertices) os << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.triangles) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!os) throw ValidationError("write_obj: write failed " + path.string());
}

}  // namespace loc
