#include <gtest/gtest.h>

#include "loc/densify.hpp"
#include "loc/pipeline.hpp"
#include "loc/random.hpp"
#include "loc/synthetic.hpp"

using namespace loc;

namespace {

PointCloud labelled(std::vector<Vec3> pts, std::int64_t frame = 0) {
  PointCloud c;
  c.frame_id = frame;
  c.labels.emplace();
  for (const auto& p : pts) c.push_back(p, 1);
  return c;
}

TrackedBox far_ego() { return TrackedBox::make(0, -1, Vec3(1000, 1000, 1000), Vec3(1, 1, 1), 0); }

VoxelGridSpec grid16() {
  VoxelGridSpec s;
  s.dim_x = s.dim_y = s.dim_z = 16;
  return s;
}

}  // namespace

TEST(Separate, Example) {
  const auto ego = TrackedBox::make(0, -1, Vec3::Zero(), Vec3(2, 2, 2), 0);
  const std::vector<TrackedBox> boxes = {TrackedBox::make(0, 7, Vec3(5, 0, 0), Vec3(2, 2, 2), M_PI / 2)};
  const auto out = separate_dynamic_static(labelled({{0.1, 0, 0}, {5.5, 0.2, 0}, {9, 9, 9}}), boxes, ego);
  EXPECT_EQ(out.ego_filtered, 1u);
  ASSERT_EQ(out.static_points.size(), 1u);
  EXPECT_EQ(out.static_points.positions[0], Vec3(9, 9, 9));
  ASSERT_EQ(out.dynamic_points.count(7), 1u);
  // Box frame rotated by +90 degrees: world +x maps to box -y.
  EXPECT_LT((out.dynamic_points.at(7).positions[0] - Vec3(0.2, -0.5, 0)).norm(), 1e-12);
}

TEST(Separate, OverlapGoesToNearestCentreThenLowerTrack) {
  const std::vector<TrackedBox> boxes = {TrackedBox::make(0, 5, Vec3(0, 0, 0), Vec3(4, 4, 4), 0),
                                         TrackedBox::make(0, 3, Vec3(1, 0, 0), Vec3(4, 4, 4), 0)};
  auto out = separate_dynamic_static(labelled({{0.9, 0, 0}}), boxes, far_ego());
  EXPECT_EQ(out.dynamic_points.count(3), 1u);
  out = separate_dynamic_static(labelled({{0.5, 0, 0}}), boxes, far_ego());
  EXPECT_EQ(out.dynamic_points.count(3), 1u);  // equidistant: lower track id
  out = separate_dynamic_static(labelled({{0.1, 0, 0}}), boxes, far_ego());
  EXPECT_EQ(out.dynamic_points.count(5), 1u);
}

TEST(Separate, RejectsBoxesFromAnotherFrame) {
  const std::vector<TrackedBox> boxes = {TrackedBox::make(1, 0, Vec3::Zero(), Vec3(1, 1, 1), 0)};
  EXPECT_THROW(separate_dynamic_static(labelled({{0, 0, 0}}), boxes, far_ego()), ValidationError);
}

// Property: every point is accounted for exactly once and matches a
// brute-force containment scan; box-frame points map back to the input.
TEST(Separate, ConservationAndContainmentOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TrackedBox> boxes;
    const int nb = rng.uniform_int(0, 4);
    for (int b = 0; b < nb; ++b)
      boxes.push_back(TrackedBox::make(0, b, Vec3(rng.uniform(-5, 5), rng.uniform(-5, 5), 0),
                                       Vec3(rng.uniform(1, 4), rng.uniform(1, 4), 2), rng.uniform(-3, 3)));
    const auto ego = TrackedBox::make(0, -1, Vec3::Zero(), Vec3(2, 1, 1), 0);
    std::vector<Vec3> pts;
    for (int i = 0; i < 300; ++i) pts.emplace_back(rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(-1, 1));
    const auto cloud = labelled(pts);
    const auto out = separate_dynamic_static(cloud, boxes, ego);

    std::size_t expect_static = 0, expect_ego = 0;
    for (const auto& p : pts) {
      if (box_contains(ego, p)) {
        ++expect_ego;
        continue;
      }
      bool any = false;
      for (const auto& b : boxes) any |= box_contains(b, p);
      expect_static += !any;
    }
    EXPECT_EQ(out.ego_filtered, expect_ego);
    EXPECT_EQ(out.static_points.size(), expect_static);
    EXPECT_EQ(out.static_points.size() + out.dynamic_count() + out.ego_filtered, pts.size());
    for (const auto& [track, c] : out.dynamic_points) {
      const TrackedBox& box = boxes[static_cast<std::size_t>(track)];
      for (const auto& q : c.positions) {
        EXPECT_TRUE((q.cwiseAbs().array() <= box.half_extents.array() + 1e-9).all());
        const Vec3 w = box.pose.apply(q);
        bool found = false;
        for (const auto& p : pts) found |= (p - w).norm() < 1e-9;
        EXPECT_TRUE(found);
      }
    }
  }
}

TEST(Aggregate, StaticPointsLandInReferenceCoordinates) {
  std::vector<RigidTransform> poses = {RigidTransform::from_yaw(0.3, Vec3(1, 2, 0)),
                                       RigidTransform::from_yaw(-0.7, Vec3(4, -1, 0.5))};
  std::vector<SeparatedFrame> frames(2);
  frames[0].frame_id = 0;
  frames[0].static_points = labelled({{1, 0, 0}}, 0);
  frames[1].frame_id = 1;
  frames[1].static_points = labelled({{0, 1, 0}, {2, 2, 2}}, 1);
  const auto agg = aggregate_static(frames, poses, 1);
  ASSERT_EQ(agg.size(), 3u);
  EXPECT_EQ(agg.frame_id, 1);
  const Vec3 expect = invert(poses[1]).apply(poses[0].apply(Vec3(1, 0, 0)));
  EXPECT_LT((agg.positions[0] - expect).norm(), 1e-12);
  EXPECT_LT((agg.positions[1] - Vec3(0, 1, 0)).norm(), 1e-12);
  EXPECT_THROW(aggregate_static(frames, poses, 5), ValidationError);
}

TEST(Fuse, TracksWithoutReferenceBoxAreOmitted) {
  std::map<std::int64_t, PointCloud> dyn;
  dyn[1] = labelled({{0, 0, 0}, {0.5, 0, 0}});
  dyn[2] = labelled({{0, 0, 0}});
  const std::vector<TrackedBox> at_t = {TrackedBox::make(3, 1, Vec3(10, 0, 0), Vec3(2, 2, 2), 0)};
  const auto fused = fuse_frame(labelled({{7, 7, 7}}, 3), dyn, at_t, 3);
  ASSERT_EQ(fused.size(), 3u);
  EXPECT_EQ(fused.positions[1], Vec3(10, 0, 0));
  EXPECT_EQ(fused.positions[2], Vec3(10.5, 0, 0));
}

// On the synthetic scene: static points keep their world position and the
// moving car's aggregate sits inside its reference-frame box, whatever the
// reference frame.
TEST(FuseSequence, FrameConsistency) {
  const auto sc = generate_synthetic_scene(3, 10, grid16());
  std::size_t total_in = 0, ego = 0;
  for (const auto& c : sc.clouds) {
    total_in += c.size();
    for (const auto& p : c.positions) ego += box_contains(sc.ego_box, p);
  }
  for (std::int64_t ref : {0, 4, 9}) {
    const auto fused = fuse_sequence(sc.clouds, sc.boxes, sc.poses, sc.ego_box, ref);
    ASSERT_TRUE(fused.origins.has_value());
    ASSERT_TRUE(fused.has_labels());
    // Every track has a box in every frame, so nothing is dropped.
    EXPECT_EQ(fused.size() + ego, total_in);
    const auto box = sc.box_in_world(ref, 1);
    ASSERT_TRUE(box.has_value());
    std::size_t car = 0;
    for (std::size_t i = 0; i < fused.size(); ++i) {
      const Vec3& p = fused.positions[i];
      const Vec3 local = invert(box->pose).apply(p);
      if ((local.cwiseAbs().array() <= box->half_extents.array() + 1e-9).all()) {
        ++car;
        EXPECT_EQ((*fused.labels)[i], 4);
      }
    }
    EXPECT_GT(car, 50u);
  }
}

TEST(FuseSequence, StaticWorldPositionsIndependentOfReference) {
  auto sc = generate_synthetic_scene(1, 4, grid16());
  const auto a = fuse_sequence(sc.clouds, {}, sc.poses, sc.ego_box, 0);
  const auto b = fuse_sequence(sc.clouds, {}, sc.poses, sc.ego_box, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_LT((a.positions[i] - b.positions[i]).norm(), 1e-9);
    EXPECT_LT(((*a.origins)[i] - (*b.origins)[i]).norm(), 1e-9);
  }
}

TEST(FuseSequence, RejectsMissingReferencePose) {
  auto sc = generate_synthetic_scene(1, 2, grid16());
  EXPECT_THROW(fuse_sequence(sc.clouds, sc.boxes, sc.poses, sc.ego_box, 2), ValidationError);
}
