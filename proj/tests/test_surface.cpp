#include <gtest/gtest.h>

#include <map>
#include <set>

#include "loc/knn.hpp"
#include "loc/marching_cubes.hpp"
#include "loc/pipeline.hpp"
#include "loc/poisson.hpp"
#include "loc/random.hpp"
#include "loc/surface_recon.hpp"
#include "loc/synthetic.hpp"

using namespace loc;

namespace {

Vec3 random_unit(Rng& rng) { return Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(); }

PointCloud sphere_cloud(Rng& rng, int n, double r, const Vec3& c = Vec3::Zero()) {
  PointCloud cloud;
  for (int i = 0; i < n; ++i) cloud.push_back(c + r * random_unit(rng));
  return cloud;
}

double angle_deg(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / M_PI;
}

ScalarGrid sphere_field(int n, double r) {
  ScalarGrid g;
  g.nx = g.ny = g.nz = n;
  g.spacing = 1.0;
  g.origin = Vec3::Constant(-(n - 1) / 2.0);
  g.values.resize(static_cast<std::size_t>(n) * n * n);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) g.values[g.index(x, y, z)] = r - g.position(x, y, z).norm();
  return g;
}

// Each undirected edge of a closed, consistently oriented mesh is used once in
// each direction.
void expect_closed_and_oriented(const TriangleMesh& m) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) ++directed[{t[e], t[(e + 1) % 3]}];
  for (const auto& [edge, n] : directed) {
    EXPECT_EQ(n, 1);
    const auto rev = directed.find({edge.second, edge.first});
    EXPECT_TRUE(rev != directed.end() && rev->second == 1);
  }
}

}  // namespace

TEST(Knn, MatchesBruteForce) {
  Rng rng(21);
  for (int n : {50, 3000}) {
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i) pts.emplace_back(rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 0.5));
    PointIndex index(pts);
    for (int q = 0; q < 200; ++q) {
      const Vec3 query(rng.uniform(-2, 12), rng.uniform(-2, 12), rng.uniform(-2, 2));
      const int k = rng.uniform_int(1, 12);
      EXPECT_EQ(index.knn(query, k), brute_force_knn(pts, query, k));
    }
  }
}

TEST(Normals, SphereOutwardFromCentre) {
  Rng rng(22);
  const auto cloud = sphere_cloud(rng, 3000, 2.0);
  const auto oriented = estimate_normals(cloud, 10, Vec3::Zero());
  int good = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) good += angle_deg(oriented.normals[i], cloud.positions[i]) < 10.0;
  EXPECT_GE(good, static_cast<int>(0.95 * 3000));
}

TEST(Normals, PlanePointsAwayFromPerPointOrigin) {
  Rng rng(23);
  PointCloud cloud;
  for (int i = 0; i < 500; ++i) cloud.push_back(Vec3(rng.uniform(0, 5), rng.uniform(0, 5), 0.0));
  cloud = with_sensor_origins(cloud);
  for (std::size_t i = 0; i < cloud.size(); ++i) (*cloud.origins)[i] = Vec3(0, 0, i % 2 ? 3.0 : -3.0);
  const auto oriented = estimate_normals(cloud, 8);
  for (std::size_t i = 0; i < cloud.size(); ++i)
    EXPECT_NEAR(oriented.normals[i].z(), i % 2 ? -1.0 : 1.0, 1e-9);
}

TEST(Normals, RejectsTooFewPoints) {
  PointCloud cloud;
  for (int i = 0; i < 4; ++i) cloud.push_back(Vec3(i, i * i, 0));
  EXPECT_THROW(estimate_normals(cloud, 5, Vec3::Zero()), ValidationError);
  EXPECT_THROW(estimate_normals(cloud, 3), ValidationError);  // no origins
}

TEST(MarchingCubes, TableCoversEveryCase) {
  const auto& t = mc::table();
  EXPECT_TRUE(t[0].empty());
  EXPECT_TRUE(t[255].empty());
  for (int mask = 1; mask < 255; ++mask) EXPECT_FALSE(t[mask].empty()) << mask;
  EXPECT_EQ(t[1].size(), 1u);
}

TEST(MarchingCubes, RandomFieldsGiveClosedOrientedSurfaces) {
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    ScalarGrid g;
    g.nx = g.ny = g.nz = 9;
    g.values.assign(9 * 9 * 9, -1.0);
    for (int x = 1; x < 8; ++x)
      for (int y = 1; y < 8; ++y)
        for (int z = 1; z < 8; ++z) g.values[g.index(x, y, z)] = rng.uniform(-1, 1);
    const auto mesh = marching_cubes(g, 0.0);
    mesh.validate();
    expect_closed_and_oriented(mesh);
  }
}

TEST(MarchingCubes, SphereVerticesOnIsosurface) {
  const auto g = sphere_field(24, 8.0);
  const auto mesh = marching_cubes(g, 0.0);
  ASSERT_FALSE(mesh.empty());
  expect_closed_and_oriented(mesh);
  for (const auto& v : mesh.vertices) EXPECT_NEAR(v.norm(), 8.0, 0.1);
}

TEST(Poisson, SphereRadialError) {
  Rng rng(25);
  const double r = 1.0;
  OrientedPointCloud cloud;
  for (int i = 0; i < 4000; ++i) {
    const Vec3 n = random_unit(rng);
    cloud.positions.push_back(r * n);
    cloud.normals.push_back(-n);
  }
  const auto res = poisson_reconstruct(cloud, 64);
  double se = 0.0;
  for (const auto& v : res.mesh.vertices) se += std::pow(v.norm() - r, 2);
  EXPECT_LT(std::sqrt(se / res.mesh.vertices.size()) / r, 0.05);
  EXPECT_LE(res.diagnostics.relative_residual, 1e-6);
  double mean = 0.0;
  for (const auto& p : cloud.positions) mean += res.chi.sample(p);
  EXPECT_NEAR(res.diagnostics.iso_value, mean / cloud.size(), 1e-12);
}

TEST(Poisson, BoxBoundsWithinOneAndAHalfCells) {
  Rng rng(26);
  const Vec3 lo(0, 0, 0), hi(2, 1, 1);
  OrientedPointCloud cloud;
  for (int i = 0; i < 6000; ++i) {
    const int face = rng.uniform_int(0, 5), axis = face / 2;
    Vec3 p(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()), rng.uniform(lo.z(), hi.z()));
    p(axis) = face % 2 ? hi(axis) : lo(axis);
    Vec3 n = Vec3::Zero();
    n(axis) = face % 2 ? -1.0 : 1.0;  // inward
    cloud.positions.push_back(p);
    cloud.normals.push_back(n);
  }
  const auto res = poisson_reconstruct(cloud, 48);
  const auto [mlo, mhi] = res.mesh.bounds();
  const double tol = 1.5 * res.diagnostics.lattice_spacing;
  for (int d = 0; d < 3; ++d) {
    EXPECT_NEAR(mlo(d), lo(d), tol);
    EXPECT_NEAR(mhi(d), hi(d), tol);
  }
}

TEST(Poisson, RejectsDegenerateInput) {
  OrientedPointCloud three;
  for (int i = 0; i < 3; ++i) {
    three.positions.push_back(Vec3(i, 0, 1));
    three.normals.push_back(Vec3::UnitZ());
  }
  EXPECT_THROW(poisson_reconstruct(three, 32), ValidationError);
  OrientedPointCloud line;
  for (int i = 0; i < 50; ++i) {
    line.positions.push_back(Vec3(i, 2 * i, 0));
    line.normals.push_back(Vec3::UnitZ());
  }
  EXPECT_THROW(poisson_reconstruct(line, 32), ValidationError);
}

TEST(Voxelize, SmallTriangleOccupiesOneCell) {
  VoxelGridSpec s;
  s.dim_x = s.dim_y = s.dim_z = 4;
  TriangleMesh m{{Vec3(1.2, 2.2, 3.2), Vec3(1.4, 2.2, 3.2), Vec3(1.2, 2.4, 3.3)}, {{0, 1, 2}}};
  const auto g = voxelize_mesh(m, s);
  EXPECT_EQ(g.occupied_count(), 1u);
  EXPECT_EQ(g.at({1, 2, 3}), kOccupied);
}

TEST(Voxelize, TriangleOnCellFaceTouchesBothSides) {
  VoxelGridSpec s;
  s.dim_x = s.dim_y = s.dim_z = 4;
  TriangleMesh m{{Vec3(0.2, 0.2, 1.0), Vec3(0.8, 0.2, 1.0), Vec3(0.2, 0.8, 1.0)}, {{0, 1, 2}}};
  const auto g = voxelize_mesh(m, s);
  EXPECT_EQ(g.occupied_count(), 2u);
  EXPECT_EQ(g.at({0, 0, 0}), kOccupied);
  EXPECT_EQ(g.at({0, 0, 1}), kOccupied);
}

// SAT against dense sampling: a sample inside a box proves overlap; SAT
// rejection must never contradict that.
TEST(Voxelize, SatAgreesWithSampling) {
  Rng rng(27);
  const Vec3 half(0.5, 0.5, 0.5);
  int overlaps = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const Vec3 a(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
    const Vec3 b = a + 0.8 * random_unit(rng), c = a + 0.8 * random_unit(rng);
    bool sampled = false;
    for (int u = 0; u <= 30 && !sampled; ++u)
      for (int v = 0; u + v <= 30 && !sampled; ++v) {
        const Vec3 p = a + (u / 30.0) * (b - a) + (v / 30.0) * (c - a);
        sampled = (p.cwiseAbs().array() <= half.array()).all();
      }
    const bool sat = triangle_box_overlap(Vec3::Zero(), half, a, b, c);
    if (sampled) EXPECT_TRUE(sat);
    overlaps += sat;
  }
  EXPECT_GT(overlaps, 100);
}

TEST(Voxelize, SphereShellMatchesDistanceBand) {
  const auto mesh = marching_cubes(sphere_field(40, 12.0), 0.0);
  VoxelGridSpec s;
  s.origin = Vec3::Constant(-16.0);
  s.voxel_size = 2.0;
  s.dim_x = s.dim_y = s.dim_z = 16;
  const auto g = voxelize_mesh(mesh, s);
  int checked = 0;
  for (std::size_t idx = 0; idx < s.cell_count(); ++idx) {
    const Vec3 c = s.center(s.unlinear(idx));
    const Vec3 nearest = c.cwiseAbs() - Vec3::Constant(1.0);
    const double dmin = nearest.cwiseMax(0.0).norm();
    const double dmax = (c.cwiseAbs() + Vec3::Constant(1.0)).norm();
    // Mesh deviates from the sphere by well under 0.1.
    if (dmin < 12.0 - 0.1 && dmax > 12.0 + 0.1) {
      EXPECT_EQ(g.labels[idx], kOccupied);
      ++checked;
    } else if (dmin > 12.0 + 0.1 || dmax < 12.0 - 0.1) {
      EXPECT_EQ(g.labels[idx], kFree);
      ++checked;
    }
  }
  EXPECT_GT(checked, 4000);
}

TEST(Voxelize, MoreTrianglesNeverRemoveCells) {
  Rng rng(28);
  VoxelGridSpec s;
  s.dim_x = s.dim_y = s.dim_z = 8;
  TriangleMesh m;
  DenseLabelGrid prev(s, kFree);
  for (int t = 0; t < 30; ++t) {
    const Vec3 a(rng.uniform(0, 8), rng.uniform(0, 8), rng.uniform(0, 8));
    m.vertices.push_back(a);
    m.vertices.push_back(a + random_unit(rng));
    m.vertices.push_back(a + random_unit(rng));
    const int base = static_cast<int>(m.vertices.size()) - 3;
    m.triangles.push_back({base, base + 1, base + 2});
    const auto g = voxelize_mesh(m, s);
    for (std::size_t i = 0; i < g.labels.size(); ++i)
      if (prev.labels[i] == kOccupied) EXPECT_EQ(g.labels[i], kOccupied);
    prev = g;
  }
}

TEST(KnnLabels, KEqualsOneIsNearestPoint) {
  Rng rng(29);
  VoxelGridSpec s;
  s.dim_x = s.dim_y = s.dim_z = 6;
  DenseLabelGrid occ(s, kFree);
  for (auto& l : occ.labels) l = rng.uniform() < 0.4 ? kOccupied : kFree;
  PointCloud pts;
  pts.labels.emplace();
  for (int i = 0; i < 200; ++i)
    pts.push_back(Vec3(rng.uniform(0, 6), rng.uniform(0, 6), rng.uniform(0, 6)), rng.uniform_int(0, 16));
  const auto out = knn_assign_labels(occ, pts, 1);
  for (std::size_t idx = 0; idx < s.cell_count(); ++idx) {
    if (occ.labels[idx] == kFree) {
      EXPECT_EQ(out.labels[idx], kFree);
      continue;
    }
    const auto nn = brute_force_knn(pts.positions, s.center(s.unlinear(idx)), 1);
    EXPECT_EQ(out.labels[idx], (*pts.labels)[nn[0].index]);
  }
}

TEST(KnnLabels, MajorityAndTieBreak) {
  VoxelGridSpec s;
  DenseLabelGrid occ(s, kOccupied);
  PointCloud pts;
  pts.labels.emplace();
  pts.push_back(Vec3(0.5, 0.5, 0.6), 9);
  pts.push_back(Vec3(0.5, 0.5, 0.4), 3);
  EXPECT_EQ(knn_assign_labels(occ, pts, 2).labels[0], 3);
  pts.push_back(Vec3(0.5, 0.6, 0.5), 9);
  EXPECT_EQ(knn_assign_labels(occ, pts, 3).labels[0], 9);
}

TEST(Densify, SyntheticSceneRecall) {
  VoxelGridSpec s;
  s.dim_x = s.dim_y = 16;
  s.dim_z = 8;
  const auto sc = generate_synthetic_scene(0, 10, s);
  DensifyOptions opt;
  const auto res = densify_sequence(sc.clouds, sc.boxes, sc.poses, sc.ego_box, s, opt);
  EXPECT_GE(surface_recall(sc.ground_truth, res.occupancy), 0.9);
  for (std::size_t i = 0; i < res.labels.labels.size(); ++i)
    EXPECT_EQ(res.labels.labels[i] == kFree, res.occupancy.labels[i] == kFree);
}
