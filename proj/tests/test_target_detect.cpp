#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "msv/target_detect.hpp"
#include "support.hpp"

using namespace msv;
using msv::test::simple_intrinsics;

namespace {

std::vector<PixelCoord> lattice(int rows, int cols, double pitch, const Eigen::Vector2d& origin = {50, 60}) {
  std::vector<PixelCoord> pts;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) pts.push_back(origin + pitch * Eigen::Vector2d(c, r));
  }
  return pts;
}

std::vector<PixelCoord> shuffled(std::vector<PixelCoord> pts, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(pts.begin(), pts.end(), rng);
  return pts;
}

/// Index of the input point each output point came from.
std::vector<int> source_indices(const std::vector<PixelCoord>& out, const std::vector<PixelCoord>& in) {
  std::vector<int> idx;
  for (const auto& p : out) {
    const auto it = std::find_if(in.begin(), in.end(), [&](const PixelCoord& q) { return (p - q).norm() < 1e-9; });
    idx.push_back(it == in.end() ? -1 : static_cast<int>(it - in.begin()));
  }
  return idx;
}

TargetSpec grid_4x11() {
  TargetSpec t;
  t.rows = 4;
  t.cols = 11;
  t.pitch = 0.02;
  t.radius = 0.006;
  t.margin = 0.02;
  return t;
}

double nearest(const std::vector<PixelCoord>& pts, const PixelCoord& q) {
  double best = 1e9;
  for (const auto& p : pts) best = std::min(best, (p - q).norm());
  return best;
}

}  // namespace

TEST(DetectBlobs, SingleDiskCentroid) {
  TargetSpec t;
  t.rows = 3;
  t.cols = 3;
  t.pitch = 0.2;
  t.radius = 0.01;
  t.margin = 0.2;
  const auto k = simple_intrinsics(200, 100, 500.0);
  const double z = 0.5;
  const PixelCoord want(100.5, 50.25);
  const RigidPose pose(Eigen::Matrix3d::Identity(), {(want.x() - k.cx) * z / k.fx, (want.y() - k.cy) * z / k.fy, z});
  const auto img = render_target_view(k, pose, t, Spectrum::rgb);
  const auto blobs = detect_blobs(img, 1);
  ASSERT_EQ(blobs.size(), 1u);
  EXPECT_LT((blobs[0] - want).norm(), 0.1);
}

TEST(DetectBlobs, ConstantImageHasNoBlobs) {
  const GrayImage img(64, 48, 1, 0.7);
  try {
    detect_blobs(img, 35);
    FAIL() << "expected WrongBlobCount";
  } catch (const WrongBlobCount& e) {
    EXPECT_EQ(e.found(), 0u);
    EXPECT_EQ(e.expected(), 35u);
  }
}

TEST(DetectBlobs, FourByElevenTargetWithinTenthPixel) {
  const TargetSpec t = grid_4x11();
  const auto k = simple_intrinsics();
  const RigidPose pose = target_pose(t, {0.01, -0.005, 0.5}, 8, -10, 3);
  const auto img = render_target_view(k, pose, t, Spectrum::rgb);
  const auto blobs = detect_blobs(img, 44);
  ASSERT_EQ(blobs.size(), 44u);
  for (const auto& p : t.object_points()) EXPECT_LT(nearest(blobs, project(pose.apply(p), k)), 0.1);
}

TEST(DetectBlobs, EightBitRendersWithinTenthPixelInEveryCamera) {
  const RigConfig rig = default_rig();
  const TargetSpec t;
  const auto poses = default_calibration_views(t, 14);
  for (std::size_t v = 0; v < poses.size(); ++v) {
    const auto f = render_calibration_frame(rig, t, poses[v], 0.0, 0, v);
    const auto check = [&](const auto& img, CameraId id) {
      const auto& cam = rig.camera(id);
      const auto blobs = detect_blobs(img, t.count());
      for (const auto& p : t.object_points()) {
        EXPECT_LT(nearest(blobs, project((cam.pose * poses[v]).apply(p), cam.intrinsics)), 0.1)
            << to_string(id) << " view " << v;
      }
    };
    check(f.rgb, CameraId::rgb);
    check(f.thermal, CameraId::thermal);
    check(f.uv, CameraId::uv);
  }
}

TEST(DetectBlobs, MeanErrorUnderPixelNoise) {
  const TargetSpec t;
  const RigConfig rig = default_rig();
  const auto poses = default_calibration_views(t, 5);
  double sum = 0.0;
  int n = 0;
  for (std::size_t v = 0; v < poses.size(); ++v) {
    RenderOptions opt;
    opt.noise_sigma = 2.0 / 255.0;
    opt.seed = 100 + v;
    const RigidPose pose = rig.rgb.pose * poses[v];
    const auto img = render_target_view(rig.rgb.intrinsics, pose, t, Spectrum::rgb, opt);
    const auto blobs = detect_blobs(img, t.count());
    for (const auto& p : t.object_points()) {
      sum += nearest(blobs, project(pose.apply(p), rig.rgb.intrinsics));
      ++n;
    }
  }
  EXPECT_LT(sum / n, 0.3);
}

TEST(OrderGrid, AxisAlignedLatticeIsRowMajor) {
  const auto grid = lattice(3, 3, 10.0);
  const auto out = order_grid(shuffled(grid, 1), 3, 3);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_LT((out[i] - grid[i]).norm(), 1e-12);
}

TEST(OrderGrid, RectangularLatticeIsRowMajor) {
  const auto grid = lattice(5, 7, 12.0);
  const auto out = order_grid(shuffled(grid, 2), 5, 7);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_LT((out[i] - grid[i]).norm(), 1e-12);
}

TEST(OrderGrid, InPlaneRotationKeepsLogicalOrder) {
  const auto grid = lattice(3, 3, 10.0, {0, 0});
  const double a = 30.0 * M_PI / 180.0;
  const Eigen::Matrix2d r{{std::cos(a), -std::sin(a)}, {std::sin(a), std::cos(a)}};
  std::vector<PixelCoord> rotated;
  for (const auto& p : grid) rotated.push_back(r * p + Eigen::Vector2d(100, 100));
  const auto out = order_grid(shuffled(rotated, 3), 3, 3);
  const auto idx = source_indices(out, rotated);
  // The rotated lattice's rows still run along +u, so the logical labels are unchanged.
  EXPECT_EQ(idx, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8}));
  const auto sum = [](const PixelCoord& p) { return p.x() + p.y(); };
  for (const auto& p : out) EXPECT_LE(sum(out.front()), sum(p) + 1e-9);
}

TEST(OrderGrid, WrongPointCountIsRejected) {
  auto pts = lattice(3, 3, 10.0);
  pts.pop_back();
  EXPECT_THROW(order_grid(pts, 3, 3), InvalidArgument);
}

TEST(OrderGrid, ScatteredPointsAreAmbiguous) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 100);
  int ambiguous = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PixelCoord> pts;
    for (int i = 0; i < 12; ++i) pts.emplace_back(u(rng), u(rng));
    try {
      order_grid(pts, 3, 4);
    } catch (const AmbiguousGrid&) {
      ++ambiguous;
    }
  }
  EXPECT_GT(ambiguous, 10);
}

TEST(OrderGrid, OutputIsPermutationOfInput) {
  const TargetSpec t;
  const RigConfig rig = default_rig();
  for (const auto& pose : default_calibration_views(t, 14)) {
    std::vector<PixelCoord> pts;
    for (const auto& p : t.object_points()) pts.push_back(project((rig.uv.pose * pose).apply(p), rig.uv.intrinsics));
    const auto in = shuffled(pts, 5);
    auto idx = source_indices(order_grid(in, t.rows, t.cols), in);
    std::sort(idx.begin(), idx.end());
    std::vector<int> all(in.size());
    std::iota(all.begin(), all.end(), 0);
    EXPECT_EQ(idx, all);
  }
}

TEST(OrderGrid, StableUnderScaleAndTranslation) {
  const TargetSpec t;
  const RigConfig rig = default_rig();
  const auto pose = default_calibration_views(t, 3)[2];
  std::vector<PixelCoord> pts;
  for (const auto& p : t.object_points()) pts.push_back(project((rig.rgb.pose * pose).apply(p), rig.rgb.intrinsics));
  const auto base = source_indices(order_grid(pts, t.rows, t.cols), pts);
  for (double s : {0.25, 3.0}) {
    std::vector<PixelCoord> moved;
    for (const auto& p : pts) moved.push_back(s * p + Eigen::Vector2d(-40, 1000));
    EXPECT_EQ(source_indices(order_grid(moved, t.rows, t.cols), moved), base);
  }
}

TEST(Observation, ObjectPointsFormExactLattice) {
  const TargetSpec t;
  const auto f = render_calibration_frame(default_rig(), t, default_calibration_views(t, 1)[0], 0.0, 0, 0);
  const auto obs = detect_grid(f.rgb, t, "v0", CameraId::rgb);
  ASSERT_EQ(obs.size(), static_cast<std::size_t>(t.rows * t.cols));
  for (int r = 0; r < t.rows; ++r) {
    for (int c = 0; c < t.cols; ++c) {
      EXPECT_EQ(obs.object_points[r * t.cols + c], WorldPoint(c * t.pitch, r * t.pitch, 0.0));
    }
  }
}

TEST(Observation, LabelingAgreesAcrossCameras) {
  const TargetSpec t;
  const RigConfig rig = default_rig();
  const auto poses = default_calibration_views(t, 14);
  const auto truth = t.object_points();
  for (std::size_t v = 0; v < poses.size(); ++v) {
    const auto f = render_calibration_frame(rig, t, poses[v], 0.0, 0, v);
    // Physical circle behind each detected label, per camera.
    std::map<CameraId, std::vector<int>> physical;
    const auto label = [&](const GridObservation& obs) {
      const auto& cam = rig.camera(obs.camera);
      std::vector<int> ids;
      for (const auto& p : obs.image_points) {
        int best = -1;
        double dist = 1e9;
        for (std::size_t i = 0; i < truth.size(); ++i) {
          const double d = (project((cam.pose * poses[v]).apply(truth[i]), cam.intrinsics) - p).norm();
          if (d < dist) dist = d, best = static_cast<int>(i);
        }
        ids.push_back(best);
      }
      physical[obs.camera] = ids;
    };
    label(detect_grid(f.rgb, t, "v", CameraId::rgb));
    label(detect_grid(f.thermal, t, "v", CameraId::thermal));
    label(detect_grid(f.uv, t, "v", CameraId::uv));
    EXPECT_EQ(physical[CameraId::rgb], physical[CameraId::thermal]) << "view " << v;
    EXPECT_EQ(physical[CameraId::rgb], physical[CameraId::uv]) << "view " << v;
  }
}
