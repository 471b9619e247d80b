#include <gtest/gtest.h>

#include <random>

#include "msv/calibration.hpp"
#include "support.hpp"

using namespace msv;
using namespace msv::test;

namespace {

std::vector<Eigen::Vector2d> plane_grid(int rows = 5, int cols = 7, double pitch = 0.03) {
  std::vector<Eigen::Vector2d> pts;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) pts.emplace_back(c * pitch, r * pitch);
  }
  return pts;
}

Eigen::Vector2d apply_h(const Eigen::Matrix3d& h, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = h * p.homogeneous();
  return q.head<2>() / q.z();
}

/// Homography K [r1 r2 t] of a plane seen from `pose`.
Eigen::Matrix3d plane_homography(const CameraIntrinsics& k, const RigidPose& pose) {
  Eigen::Matrix3d m;
  m << pose.rotation().col(0), pose.rotation().col(1), pose.translation();
  return k.matrix() * m;
}

double up_to_scale_error(Eigen::Matrix3d a, Eigen::Matrix3d b) {
  a /= a.norm();
  b /= b.norm();
  return std::min((a - b).norm(), (a + b).norm());
}

/// Exact projections of the default grid seen from `poses`.
std::vector<GridObservation> exact_observations(const CameraIntrinsics& k, const std::vector<RigidPose>& poses) {
  const TargetSpec t;
  std::vector<GridObservation> out;
  for (std::size_t v = 0; v < poses.size(); ++v) {
    GridObservation o;
    o.view_id = view_name(static_cast<int>(v));
    o.rows = t.rows;
    o.cols = t.cols;
    o.object_points = t.object_points();
    for (const auto& p : o.object_points) o.image_points.push_back(project(poses[v].apply(p), k));
    out.push_back(o);
  }
  return out;
}

std::vector<RigidPose> camera_views(const CameraSetup& cam, int n) {
  std::vector<RigidPose> out;
  for (const auto& p : default_calibration_views(TargetSpec{}, n)) out.push_back(cam.pose * p);
  return out;
}

}  // namespace

TEST(Homography, IdentityMapping) {
  const auto obj = plane_grid();
  const auto est = estimate_homography(obj, obj);
  EXPECT_LT(up_to_scale_error(est.matrix, Eigen::Matrix3d::Identity()), 1e-10);
  EXPECT_LT(est.rms_transfer_error, 1e-10);
  EXPECT_NEAR(est.matrix.norm(), 1.0, 1e-12);
}

TEST(Homography, RecoversSeededRandomMatrix) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int tested = 0;
  while (tested < 20) {
    Eigen::Matrix3d h;
    for (int i = 0; i < 9; ++i) h(i / 3, i % 3) = u(rng);
    std::vector<Eigen::Vector2d> obj, img;
    bool ok = std::abs(h.determinant()) > 0.05;
    for (int i = 0; i < 30 && ok; ++i) {
      const Eigen::Vector2d p(u(rng), u(rng));
      const Eigen::Vector3d q = h * p.homogeneous();
      if (std::abs(q.z()) < 0.2) {
        ok = false;
        break;
      }
      obj.push_back(p);
      img.push_back(q.head<2>() / q.z());
    }
    if (!ok) continue;
    ++tested;
    EXPECT_LT(up_to_scale_error(estimate_homography(obj, img).matrix, h), 1e-8);
  }
}

TEST(Homography, CollinearPointsAreDegenerate) {
  const std::vector<Eigen::Vector2d> obj{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  const std::vector<Eigen::Vector2d> img{{10, 10}, {20, 21}, {30, 32}, {40, 43}};
  EXPECT_THROW(estimate_homography(obj, obj), DegenerateConfiguration);
  EXPECT_THROW(estimate_homography(obj, img), DegenerateConfiguration);
}

TEST(Homography, NeedsFourPoints) {
  const std::vector<Eigen::Vector2d> obj{{0, 0}, {1, 0}, {0, 1}};
  EXPECT_THROW(estimate_homography(obj, obj), DegenerateConfiguration);
}

TEST(Zhang, RecoversFocalFromTiltedViews) {
  const auto k = simple_intrinsics();
  std::vector<Eigen::Matrix3d> hs;
  const double tilts[5][2] = {{30, 0}, {-30, 10}, {0, 30}, {15, -30}, {-20, -25}};
  for (const auto& tl : tilts) {
    const RigidPose pose(rotation_xyz_deg(tl[0], tl[1], 5.0), {-0.09, -0.06, 0.6});
    hs.push_back(plane_homography(k, pose));
  }
  const auto est = zhang_intrinsics(hs, 640, 480);
  EXPECT_NEAR(est.fx / 500.0, 1.0, 0.005);
  EXPECT_NEAR(est.fy / 500.0, 1.0, 0.005);
  EXPECT_NEAR(est.cx, 320.0, 1.0);
  EXPECT_NEAR(est.cy, 240.0, 1.0);
  EXPECT_EQ(est.skew, 0.0);
  EXPECT_TRUE(est.distortion.is_zero());
}

TEST(Zhang, TwoViewsAreInsufficient) {
  const auto k = simple_intrinsics();
  std::vector<Eigen::Matrix3d> hs{plane_homography(k, RigidPose(rotation_xyz_deg(20, 0, 0), {0, 0, 0.5})),
                                  plane_homography(k, RigidPose(rotation_xyz_deg(0, 20, 0), {0, 0, 0.5}))};
  EXPECT_THROW(zhang_intrinsics(hs, 640, 480), InsufficientViews);
}

TEST(Zhang, FrontoParallelViewsAreIllConditioned) {
  const auto k = simple_intrinsics();
  std::vector<Eigen::Matrix3d> hs;
  for (int i = 0; i < 5; ++i) {
    hs.push_back(plane_homography(k, RigidPose(rotation_xyz_deg(0, 0, 10.0 * i), {0.01 * i, -0.02 * i, 0.5 + 0.05 * i})));
  }
  EXPECT_THROW(zhang_intrinsics(hs, 640, 480), IllConditioned);
}

TEST(EstimatePose, FrontoParallelTarget) {
  const auto k = simple_intrinsics();
  const RigidPose truth(Eigen::Matrix3d::Identity(), {0, 0, 0.5});
  const RigidPose est = estimate_pose(k, plane_homography(k, truth) * 3.7);
  EXPECT_LT((est.translation() - Eigen::Vector3d(0, 0, 0.5)).norm(), 1e-6);
  EXPECT_LT((est.rotation() - Eigen::Matrix3d::Identity()).norm(), 1e-8);
}

TEST(EstimatePose, RotationIsOrthonormal) {
  const auto k = simple_intrinsics();
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Eigen::Matrix3d h = plane_homography(k, RigidPose::from_axis_angle({0.3 * n(rng), 0.3 * n(rng), n(rng)}, {0.1 * n(rng), 0.1 * n(rng), 1.0}));
    for (int j = 0; j < 9; ++j) h(j / 3, j % 3) *= 1.0 + 0.01 * n(rng);
    const RigidPose p = estimate_pose(k, h);
    EXPECT_LT((p.rotation().transpose() * p.rotation() - Eigen::Matrix3d::Identity()).norm(), 1e-9);
    EXPECT_NEAR(p.rotation().determinant(), 1.0, 1e-9);
  }
}

TEST(EstimatePose, EnforcesPositiveDepth) {
  const auto k = simple_intrinsics();
  const RigidPose behind(rotation_xyz_deg(10, -5, 0), {0.02, 0.01, -0.5});
  const RigidPose est = estimate_pose(k, plane_homography(k, behind));
  EXPECT_GT(est.translation().z(), 0.0);
}

TEST(EstimatePose, ReprojectsWithinHomographyResidual) {
  const auto rig = default_rig();
  const auto views = camera_views(rig.uv, 5);
  const auto k = rig.uv.intrinsics.without_distortion();
  for (const auto& obs : exact_observations(k, views)) {
    std::vector<Eigen::Vector2d> planar;
    for (const auto& p : obs.object_points) planar.push_back(p.head<2>());
    const auto h = estimate_homography(planar, obs.image_points);
    const RigidPose p = estimate_pose(k, h.matrix);
    for (std::size_t i = 0; i < planar.size(); ++i) {
      EXPECT_LT((project(p.apply(obs.object_points[i]), k) - obs.image_points[i]).norm(), 1e-6);
    }
  }
}

TEST(Refine, AlreadyOptimalStartNeedsNoSteps) {
  const auto rig = default_rig();
  const auto views = camera_views(rig.rgb, 10);
  const auto obs = exact_observations(rig.rgb.intrinsics, views);
  CameraCalibration init;
  init.intrinsics = rig.rgb.intrinsics;
  init.poses = views;
  for (const auto& o : obs) init.view_ids.push_back(o.view_id);
  RefineReport rep;
  const auto out = refine(init, obs, {}, &rep);
  EXPECT_EQ(rep.iterations, 0);
  EXPECT_LT(out.rms, 1e-6);
}

TEST(Refine, RecoversFromPerturbedIntrinsics) {
  const auto rig = default_rig();
  const TargetSpec t;
  const auto poses = default_calibration_views(t, 10);
  std::vector<GridObservation> obs;
  for (int v = 0; v < 10; ++v) {
    const auto f = render_calibration_frame(rig, t, poses[v], 0.0, 0, v);
    obs.push_back(detect_grid(f.rgb, t, view_name(v), CameraId::rgb));
  }
  CameraCalibration init;
  init.intrinsics = rig.rgb.intrinsics;
  init.intrinsics.fx *= 1.05;
  init.intrinsics.fy *= 0.95;
  init.intrinsics.cx *= 1.05;
  init.intrinsics.cy *= 0.95;
  init.intrinsics.distortion = {};
  for (int v = 0; v < 10; ++v) init.poses.push_back(rig.rgb.pose * poses[v]);
  for (const auto& o : obs) init.view_ids.push_back(o.view_id);
  RefineReport rep;
  const auto out = refine(init, obs, {}, &rep);
  EXPECT_NEAR(out.intrinsics.fx / rig.rgb.intrinsics.fx, 1.0, 1e-3);
  EXPECT_NEAR(out.intrinsics.fy / rig.rgb.intrinsics.fy, 1.0, 1e-3);
  EXPECT_LT(out.rms, 1e-3);
  EXPECT_LE(rep.final_rms, rep.initial_rms);
}

TEST(Refine, ResidualMatchesObservationNoise) {
  const auto rig = default_rig();
  const auto views = camera_views(rig.uv, 10);
  const double sigma = 0.2;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto obs = exact_observations(rig.uv.intrinsics, views);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& o : obs) {
      for (auto& p : o.image_points) p += PixelCoord(n(rng), n(rng));
    }
    const auto cal = calibrate_camera(CameraId::uv, obs, 640, 480);
    EXPECT_GT(cal.rms, sigma / 1.5) << "seed " << seed;
    EXPECT_LT(cal.rms, sigma * 1.5) << "seed " << seed;
  }
}

TEST(Refine, FrozenK3StaysAtStartValue) {
  const auto rig = default_rig();
  const auto views = camera_views(rig.thermal, 10);
  const auto obs = exact_observations(rig.thermal.intrinsics, views);
  RefineOptions opt;
  opt.fix_k3 = true;
  const auto cal = calibrate_camera(CameraId::thermal, obs, 160, 120, opt);
  EXPECT_EQ(cal.intrinsics.distortion.k3, 0.0);
  EXPECT_LT(cal.rms, 1e-6);
}

TEST(Refine, AnalyticJacobianMatchesCentralDifferences) {
  const auto rig = default_rig();
  const auto views = camera_views(rig.rgb, 3);
  const auto obs = exact_observations(rig.rgb.intrinsics, views);
  const ReprojectionProblem problem(obs);
  const Eigen::VectorXd x0 = problem.pack(rig.rgb.intrinsics, views);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd x = x0;
    x(0) *= 1.0 + 0.05 * n(rng);
    x(1) *= 1.0 + 0.05 * n(rng);
    x(2) += 5.0 * n(rng);
    x(3) += 5.0 * n(rng);
    for (int i = 4; i < 9; ++i) x(i) += 0.02 * n(rng);
    for (Eigen::Index i = 9; i < x.size(); ++i) x(i) += 0.02 * n(rng);
    Eigen::VectorXd r, rp, rm;
    Eigen::MatrixXd jac;
    ASSERT_TRUE(problem.residuals(x, rig.rgb.intrinsics, r, &jac));
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      problem.residuals(xp, rig.rgb.intrinsics, rp);
      problem.residuals(xm, rig.rgb.intrinsics, rm);
      const Eigen::VectorXd fd = (rp - rm) / (2 * h);
      EXPECT_LE((fd - jac.col(i)).norm(), 1e-4 * std::max(1.0, fd.norm())) << "trial " << trial << " param " << i;
    }
  }
}

TEST(RelativeExtrinsicsTest, SamePoseGivesIdentity) {
  const RigidPose p = RigidPose::from_axis_angle({0.1, 0.2, -0.3}, {0.5, -0.1, 1.2});
  const RigidPose rel = relative_extrinsics(p, p);
  EXPECT_LT((rel.matrix() - Eigen::Matrix4d::Identity()).norm(), 1e-12);
}

TEST(RelativeExtrinsicsTest, DirectComposition) {
  const RigidPose b(Eigen::Matrix3d::Identity(), {0.03, 0, 0});
  const RigidPose rel = relative_extrinsics(RigidPose::identity(), b);
  EXPECT_LT((rel.translation() - Eigen::Vector3d(0.03, 0, 0)).norm(), 1e-15);
  EXPECT_LT((rel.rotation() - Eigen::Matrix3d::Identity()).norm(), 1e-15);
}

TEST(RelativeExtrinsicsTest, SelfConsistency) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const RigidPose p = RigidPose::from_axis_angle({n(rng), n(rng), n(rng)}, {n(rng), n(rng), n(rng)});
    const RigidPose q = RigidPose::from_axis_angle({n(rng), n(rng), n(rng)}, {n(rng), n(rng), n(rng)});
    const RigidPose pq = relative_extrinsics(p, q);
    EXPECT_LT(((relative_extrinsics(q, p) * pq).matrix() - Eigen::Matrix4d::Identity()).norm(), 1e-9);
    const WorldPoint x(n(rng), n(rng), n(rng));
    EXPECT_LT((transform(pq, transform(p, x)) - transform(q, x)).norm(), 1e-9);
  }
}

TEST(RelativeExtrinsicsTest, AveragesSharedViewsOnly) {
  CameraCalibration a, b;
  a.camera = CameraId::rgb;
  b.camera = CameraId::uv;
  const RigidPose offset = RigidPose::from_axis_angle({0, 0, 0.01}, {0.03, 0, 0});
  const RigidPose jitter_p = RigidPose::from_axis_angle({0, 0, 0.002}, {0.001, 0, 0});
  const RigidPose jitter_m = RigidPose::from_axis_angle({0, 0, -0.002}, {-0.001, 0, 0});
  const RigidPose world = RigidPose::from_axis_angle({0.2, 0.1, 0}, {0, 0, 0.5});
  a.view_ids = {"v0", "v1", "v2"};
  a.poses = {world, world, world};
  b.view_ids = {"v1", "v2", "v9"};
  b.poses = {jitter_p * offset * world, jitter_m * offset * world, RigidPose::identity()};
  const auto rel = relative_extrinsics(a, b);
  EXPECT_EQ(rel.views, 2);
  EXPECT_LT(rotation_error_deg(rel.pose, offset), 1e-6);
  EXPECT_NEAR(rel.rotation_spread_deg, 0.002 * 180.0 / M_PI, 1e-6);
  EXPECT_GT(rel.translation_spread_m, 0.0);

  b.view_ids = {"x", "y", "z"};
  EXPECT_THROW(relative_extrinsics(a, b), NoSharedViews);
}

TEST(CalibrateCamera, TooFewViews) {
  const auto rig = default_rig();
  const auto obs = exact_observations(rig.rgb.intrinsics, camera_views(rig.rgb, 2));
  EXPECT_THROW(calibrate_camera(CameraId::rgb, obs, 640, 480), InsufficientViews);
}

TEST(CalibrateRig, NoiselessBaselineRecovery) {
  const auto& cal = default_rig_calibration();
  const auto rig = default_rig();
  for (CameraId id : {CameraId::uv, CameraId::thermal}) {
    const auto& rel = cal.extrinsic(CameraId::rgb, id);
    const RigidPose truth = rig_relative_pose(rig, CameraId::rgb, id);
    EXPECT_LT(rotation_error_deg(rel.pose, truth), 0.05) << to_string(id);
    EXPECT_LT(translation_error_m(rel.pose, truth), 0.5e-3) << to_string(id);
    EXPECT_EQ(rel.views, 10);
  }
  for (const auto& [id, c] : cal.cameras) {
    EXPECT_LT(c.rms, 1e-3) << to_string(id);
    for (const auto& p : c.poses) {
      EXPECT_LT((p.rotation().transpose() * p.rotation() - Eigen::Matrix3d::Identity()).norm(), 1e-9);
    }
  }
}
