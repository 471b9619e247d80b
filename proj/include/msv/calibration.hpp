#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "msv/camera_model.hpp"
#include "msv/errors.hpp"
#include "msv/synthetic_rig.hpp"
#include "msv/target_detect.hpp"

namespace msv {

struct HomographyEstimate {
  Eigen::Matrix3d matrix;     // ||H||_F = 1
  double rms_transfer_error;  // pixels, over the input correspondences
};

namespace detail {

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
inline Eigen::Matrix3d hartley_normalization(std::span<const Eigen::Vector2d> pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  const double s = dist > 0.0 ? std::sqrt(2.0) / dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0.0, -s * mean.x(), 0.0, s, -s * mean.y(), 0.0, 0.0, 1.0;
  return t;
}

inline bool nearly_collinear(std::span<const Eigen::Vector2d> pts, const Eigen::Matrix3d& norm) {
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector2d q = (norm * p.homogeneous()).head<2>();
    cov += q * q.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  return eig.eigenvalues()(0) <= 1e-9 * eig.eigenvalues()(1);
}

inline Eigen::Vector2d apply_homography(const Eigen::Matrix3d& h, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = h * p.homogeneous();
  return q.head<2>() / q.z();
}

}  // namespace detail

/// Normalized DLT homography mapping planar object coordinates to image points.
inline HomographyEstimate estimate_homography(std::span<const Eigen::Vector2d> object_pts,
                                              std::span<const PixelCoord> image_pts) {
  if (object_pts.size() != image_pts.size()) throw InvalidArgument("correspondence lists differ in length");
  if (object_pts.size() < 4) throw DegenerateConfiguration("need at least 4 correspondences");
  const Eigen::Matrix3d to = detail::hartley_normalization(object_pts);
  const Eigen::Matrix3d ti = detail::hartley_normalization(image_pts);
  if (detail::nearly_collinear(object_pts, to) || detail::nearly_collinear(image_pts, ti)) {
    throw DegenerateConfiguration("points are collinear");
  }

  const auto n = static_cast<Eigen::Index>(object_pts.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d x = to * object_pts[i].homogeneous();
    const Eigen::Vector3d u = ti * image_pts[i].homogeneous();
    a.row(2 * i) << 0, 0, 0, -u.z() * x.transpose(), u.y() * x.transpose();
    a.row(2 * i + 1) << u.z() * x.transpose(), 0, 0, 0, -u.x() * x.transpose();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv.size() >= 9 && sv(8) > 0.0 && std::abs(sv(7) - sv(8)) <= 1e-9 * sv(0)) {
    throw DegenerateConfiguration("homography null space is not one-dimensional");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d hm = ti.inverse() * hn * to;
  hm /= hm.norm();
  if (hm(2, 2) < 0.0) hm = -hm;

  double sq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    sq += (detail::apply_homography(hm, object_pts[i]) - image_pts[i]).squaredNorm();
  }
  return {hm, std::sqrt(sq / static_cast<double>(n))};
}

namespace detail {

inline Eigen::Matrix<double, 6, 1> zhang_row(const Eigen::Matrix3d& h, int i, int j) {
  Eigen::Matrix<double, 6, 1> v;
  v << h(0, i) * h(0, j), h(0, i) * h(1, j) + h(1, i) * h(0, j), h(1, i) * h(1, j),
      h(2, i) * h(0, j) + h(0, i) * h(2, j), h(2, i) * h(1, j) + h(1, i) * h(2, j), h(2, i) * h(2, j);
  return v;
}

}  // namespace detail

/// Closed-form pinhole intrinsics from three or more plane homographies (zero distortion,
/// zero skew). Homographies are pre-conditioned by an image-size normalization.
inline CameraIntrinsics zhang_intrinsics(std::span<const Eigen::Matrix3d> homographies, int width, int height) {
  if (homographies.size() < 3) throw InsufficientViews("need at least 3 views, got " + std::to_string(homographies.size()));
  const double s = 2.0 / (width + height);
  Eigen::Matrix3d norm;
  norm << s, 0.0, -0.5 * s * width, 0.0, s, -0.5 * s * height, 0.0, 0.0, 1.0;

  const auto n = static_cast<Eigen::Index>(homographies.size());
  Eigen::MatrixXd v(2 * n, 6);
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Matrix3d h = norm * homographies[k];
    h /= h.norm();
    v.row(2 * k) = detail::zhang_row(h, 0, 1).transpose();
    v.row(2 * k + 1) = (detail::zhang_row(h, 0, 0) - detail::zhang_row(h, 1, 1)).transpose();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(4) <= 1e-9 * sv(0)) throw IllConditioned("absolute conic system is rank deficient");
  Eigen::Matrix<double, 6, 1> b = svd.matrixV().col(5);
  if (b(0) < 0.0) b = -b;
  const double b11 = b(0), b12 = b(1), b22 = b(2), b13 = b(3), b23 = b(4), b33 = b(5);

  const double w = b11 * b22 - b12 * b12;
  if (!(b11 > 0.0) || !(w > 0.0)) throw IllConditioned("conic matrix is not positive definite");
  const double v0 = (b12 * b13 - b11 * b23) / w;
  const double lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
  if (!(lambda / b11 > 0.0)) throw IllConditioned("conic matrix is not positive definite");
  const double alpha = std::sqrt(lambda / b11);
  const double beta = std::sqrt(lambda * b11 / w);
  const double gamma = -b12 * alpha * alpha * beta / lambda;
  const double u0 = gamma * v0 / beta - b13 * alpha * alpha / lambda;

  Eigen::Matrix3d kn;
  kn << alpha, gamma, u0, 0.0, beta, v0, 0.0, 0.0, 1.0;
  const Eigen::Matrix3d k = norm.inverse() * kn;

  CameraIntrinsics intr;
  intr.width = width;
  intr.height = height;
  intr.fx = k(0, 0) / k(2, 2);
  intr.fy = k(1, 1) / k(2, 2);
  intr.cx = k(0, 2) / k(2, 2);
  intr.cy = k(1, 2) / k(2, 2);
  intr.skew = 0.0;
  if (!std::isfinite(intr.fx) || !std::isfinite(intr.fy)) throw IllConditioned("non-finite focal length");
  return intr;
}

/// Nearest rotation (Frobenius norm) to an arbitrary 3x3 matrix.
inline Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
  return u * v.transpose();
}

/// Target->camera pose from a plane homography and pinhole intrinsics.
inline RigidPose estimate_pose(const CameraIntrinsics& intr, const Eigen::Matrix3d& homography) {
  const Eigen::Matrix3d kinv = intr.without_distortion().matrix().inverse();
  const Eigen::Vector3d a1 = kinv * homography.col(0);
  const Eigen::Vector3d a2 = kinv * homography.col(1);
  const Eigen::Vector3d a3 = kinv * homography.col(2);
  double lambda = 1.0 / a1.norm();
  if ((lambda * a3).z() < 0.0) lambda = -lambda;
  const Eigen::Vector3d r1 = lambda * a1;
  const Eigen::Vector3d r2 = lambda * a2;
  Eigen::Matrix3d r;
  r << r1, r2, r1.cross(r2);
  return RigidPose(nearest_rotation(r), lambda * a3);
}

/// Intrinsics and per-view target->camera poses of one camera.
struct CameraCalibration {
  CameraId camera = CameraId::rgb;
  CameraIntrinsics intrinsics;
  std::vector<std::string> view_ids;
  std::vector<RigidPose> poses;
  double rms = 0.0;

  const RigidPose* pose_for(const std::string& view) const {
    for (std::size_t i = 0; i < view_ids.size(); ++i) {
      if (view_ids[i] == view) return &poses[i];
    }
    return nullptr;
  }
};

struct RefineOptions {
  double initial_lambda = 1e-3;
  int max_iterations = 100;
  double relative_tolerance = 1e-12;
  bool fix_k3 = false;
};

struct RefineReport {
  int iterations = 0;  // accepted steps
  int evaluations = 0;
  double initial_rms = 0.0;
  double final_rms = 0.0;
};

/// Parameter layout used by the refinement: fx, fy, cx, cy, k1, k2, p1, p2, k3 followed by
/// (axis-angle, translation) per view.
class ReprojectionProblem {
 public:
  static constexpr int kIntrinsicParams = 9;
  static constexpr int kViewParams = 6;

  explicit ReprojectionProblem(std::span<const GridObservation> observations) : observations_(observations) {
    for (const auto& o : observations_) points_ += o.size();
  }

  std::size_t point_count() const { return points_; }
  Eigen::Index parameter_count() const {
    return kIntrinsicParams + kViewParams * static_cast<Eigen::Index>(observations_.size());
  }
  Eigen::Index residual_count() const { return 2 * static_cast<Eigen::Index>(points_); }

  Eigen::VectorXd pack(const CameraIntrinsics& intr, std::span<const RigidPose> poses) const {
    Eigen::VectorXd x(parameter_count());
    const auto& d = intr.distortion;
    x.head<kIntrinsicParams>() << intr.fx, intr.fy, intr.cx, intr.cy, d.k1, d.k2, d.p1, d.p2, d.k3;
    for (std::size_t v = 0; v < poses.size(); ++v) {
      x.segment<3>(kIntrinsicParams + kViewParams * v) = poses[v].axis_angle();
      x.segment<3>(kIntrinsicParams + kViewParams * v + 3) = poses[v].translation();
    }
    return x;
  }

  static CameraIntrinsics intrinsics(const Eigen::VectorXd& x, const CameraIntrinsics& like) {
    CameraIntrinsics c = like;
    c.fx = x(0);
    c.fy = x(1);
    c.cx = x(2);
    c.cy = x(3);
    c.skew = 0.0;
    c.distortion = {x(4), x(5), x(6), x(7), x(8)};
    return c;
  }

  RigidPose pose(const Eigen::VectorXd& x, std::size_t view) const {
    return RigidPose::from_axis_angle(x.segment<3>(kIntrinsicParams + kViewParams * view),
                                      x.segment<3>(kIntrinsicParams + kViewParams * view + 3));
  }

  /// Residuals (projected - observed). Returns false when a point falls behind the camera.
  bool residuals(const Eigen::VectorXd& x, const CameraIntrinsics& like, Eigen::VectorXd& r,
                 Eigen::MatrixXd* jacobian = nullptr) const {
    const CameraIntrinsics intr = intrinsics(x, like);
    r.resize(residual_count());
    if (jacobian) jacobian->setZero(residual_count(), parameter_count());
    Eigen::Index row = 0;
    for (std::size_t v = 0; v < observations_.size(); ++v) {
      const Eigen::Vector3d omega = x.segment<3>(kIntrinsicParams + kViewParams * v);
      const RigidPose p = pose(x, v);
      const auto& obs = observations_[v];
      for (std::size_t i = 0; i < obs.size(); ++i, row += 2) {
        const Eigen::Vector3d pc = p.apply(obs.object_points[i]);
        if (!(pc.z() > 0.0)) return false;
        if (!jacobian) {
          r.segment<2>(row) = project(pc, intr) - obs.image_points[i];
          continue;
        }
        const ProjectionJacobian pj = project_with_jacobian(pc, intr);
        r.segment<2>(row) = pj.pixel - obs.image_points[i];
        jacobian->block<2, kIntrinsicParams>(row, 0) = pj.d_intrinsics;
        const Eigen::Index col = kIntrinsicParams + kViewParams * static_cast<Eigen::Index>(v);
        jacobian->block<2, 3>(row, col) = pj.d_point * rotation_derivative(omega, p.rotation(), obs.object_points[i]);
        jacobian->block<2, 3>(row, col + 3) = pj.d_point;
      }
    }
    return true;
  }

  /// d(R(omega) X) / d(omega) for the axis-angle exponential map.
  static Eigen::Matrix3d rotation_derivative(const Eigen::Vector3d& omega, const Eigen::Matrix3d& rot,
                                             const Eigen::Vector3d& point) {
    const Eigen::Matrix3d px = skew_matrix(point);
    const double theta2 = omega.squaredNorm();
    if (theta2 < 1e-16) return -rot * px;
    const Eigen::Matrix3d w = omega * omega.transpose() + (rot.transpose() - Eigen::Matrix3d::Identity()) * skew_matrix(omega);
    return -rot * px * w / theta2;
  }

  static Eigen::Matrix3d skew_matrix(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
  }

 private:
  std::span<const GridObservation> observations_;
  std::size_t points_ = 0;
};

/// Levenberg-Marquardt refinement of intrinsics, distortion and view poses.
inline CameraCalibration refine(const CameraCalibration& initial, std::span<const GridObservation> observations,
                                const RefineOptions& opt = {}, RefineReport* report = nullptr) {
  if (observations.size() != initial.poses.size()) throw InvalidArgument("one initial pose per observation required");
  for (std::size_t v = 0; v < observations.size(); ++v) {
    if (observations[v].image_points.size() != observations[v].object_points.size()) {
      throw InvalidArgument("observation has mismatched point lists");
    }
  }
  const ReprojectionProblem problem(observations);
  const auto npts = static_cast<double>(problem.point_count());
  if (problem.point_count() == 0) throw InsufficientViews("no observations to refine");

  std::vector<bool> is_free(problem.parameter_count(), true);
  if (opt.fix_k3) is_free[8] = false;
  std::vector<Eigen::Index> free_idx;
  for (Eigen::Index i = 0; i < problem.parameter_count(); ++i) {
    if (is_free[i]) free_idx.push_back(i);
  }
  const auto nf = static_cast<Eigen::Index>(free_idx.size());

  Eigen::VectorXd x = problem.pack(initial.intrinsics, initial.poses);
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  if (!problem.residuals(x, initial.intrinsics, r, &jac)) {
    throw InvalidArgument("initial poses put target points behind the camera");
  }
  double cost = r.squaredNorm();
  RefineReport rep;
  rep.initial_rms = std::sqrt(cost / npts);
  rep.evaluations = 1;

  constexpr double kNegligibleMeanSquare = 1e-20;  // (1e-10 px)^2 per point
  double lambda = opt.initial_lambda;
  int rejections = 0;
  double last_rejected = -1.0;
  int increasing = 0;
  for (int it = 0; it < opt.max_iterations && cost / npts > kNegligibleMeanSquare; ++it) {
    Eigen::MatrixXd a(nf, nf);
    Eigen::VectorXd g(nf);
    const Eigen::MatrixXd jf = jac(Eigen::all, free_idx);
    a = jf.transpose() * jf;
    g = jf.transpose() * r;
    Eigen::MatrixXd damped = a;
    for (Eigen::Index i = 0; i < nf; ++i) damped(i, i) += lambda * std::max(a(i, i), 1e-12);
    const Eigen::VectorXd step = damped.ldlt().solve(-g);

    Eigen::VectorXd trial = x;
    for (Eigen::Index i = 0; i < nf; ++i) trial(free_idx[i]) += step(i);
    Eigen::VectorXd r_trial;
    double trial_cost = std::numeric_limits<double>::infinity();
    if (step.allFinite() && problem.residuals(trial, initial.intrinsics, r_trial)) trial_cost = r_trial.squaredNorm();
    ++rep.evaluations;

    if (trial_cost < cost) {
      const double rel = (cost - trial_cost) / cost;
      x = trial;
      cost = trial_cost;
      lambda /= 10.0;
      rejections = 0;
      increasing = 0;
      last_rejected = -1.0;
      ++rep.iterations;
      problem.residuals(x, initial.intrinsics, r, &jac);
      ++rep.evaluations;
      if (rel < opt.relative_tolerance) break;
    } else {
      lambda *= 10.0;
      ++rejections;
      increasing = (last_rejected >= 0.0 && trial_cost > last_rejected) ? increasing + 1 : 1;
      last_rejected = trial_cost;
      if (rejections >= 10) {
        if (increasing >= 10) throw DivergedRefinement("cost increased on 10 consecutive iterations");
        break;  // stalled at a minimum
      }
    }
  }

  CameraCalibration out = initial;
  out.intrinsics = ReprojectionProblem::intrinsics(x, initial.intrinsics);
  for (std::size_t v = 0; v < out.poses.size(); ++v) out.poses[v] = problem.pose(x, v);
  out.rms = std::sqrt(cost / npts);
  rep.final_rms = out.rms;
  if (report) *report = rep;
  return out;
}

/// Reprojection RMS (pixels per point) of a calibration over its observations.
inline double reprojection_rms(const CameraCalibration& cal, std::span<const GridObservation> observations) {
  double sq = 0.0;
  std::size_t n = 0;
  for (std::size_t v = 0; v < observations.size(); ++v) {
    for (std::size_t i = 0; i < observations[v].size(); ++i) {
      sq += (project(cal.poses[v].apply(observations[v].object_points[i]), cal.intrinsics) -
             observations[v].image_points[i]).squaredNorm();
      ++n;
    }
  }
  return n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
}

/// Full single-camera calibration: homographies, closed-form intrinsics, planar poses,
/// then nonlinear refinement.
inline CameraCalibration calibrate_camera(CameraId camera, std::span<const GridObservation> observations, int width,
                                          int height, const RefineOptions& opt = {}, RefineReport* report = nullptr) {
  if (observations.size() < 3) {
    throw InsufficientViews(std::string(to_string(camera)) + ": need at least 3 views, got " +
                            std::to_string(observations.size()));
  }
  std::vector<Eigen::Matrix3d> hs;
  for (const auto& obs : observations) {
    std::vector<Eigen::Vector2d> planar;
    planar.reserve(obs.size());
    for (const auto& p : obs.object_points) planar.push_back(p.head<2>());
    hs.push_back(estimate_homography(planar, obs.image_points).matrix);
  }
  CameraCalibration init;
  init.camera = camera;
  init.intrinsics = zhang_intrinsics(hs, width, height);
  for (std::size_t v = 0; v < observations.size(); ++v) {
    init.view_ids.push_back(observations[v].view_id);
    init.poses.push_back(estimate_pose(init.intrinsics, hs[v]));
  }
  init.rms = reprojection_rms(init, observations);
  return refine(init, observations, opt, report);
}

/// Rigid transform between two cameras, averaged over shared views.
struct RelativeExtrinsics {
  CameraId source = CameraId::rgb;
  CameraId destination = CameraId::uv;
  RigidPose pose;  // source camera frame -> destination camera frame
  int views = 0;
  double rotation_spread_deg = 0.0;
  double translation_spread_m = 0.0;
};

/// Source->destination transform from the two cameras' poses of the same target placement.
inline RigidPose relative_extrinsics(const RigidPose& world_to_a, const RigidPose& world_to_b) {
  return world_to_b * world_to_a.inverse();
}

/// Averages per-view relative transforms: sign-aligned quaternion mean and arithmetic mean
/// translation. The spreads are the largest per-view deviations from the mean.
inline RelativeExtrinsics relative_extrinsics(const CameraCalibration& a, const CameraCalibration& b) {
  std::vector<RigidPose> per_view;
  for (std::size_t i = 0; i < a.view_ids.size(); ++i) {
    if (const RigidPose* pb = b.pose_for(a.view_ids[i])) per_view.push_back(relative_extrinsics(a.poses[i], *pb));
  }
  if (per_view.empty()) {
    throw NoSharedViews(std::string(to_string(a.camera)) + " and " + std::string(to_string(b.camera)) +
                        " share no views");
  }
  const Eigen::Quaterniond q0(per_view.front().rotation());
  Eigen::Vector4d qsum = Eigen::Vector4d::Zero();
  Eigen::Vector3d tsum = Eigen::Vector3d::Zero();
  for (const auto& p : per_view) {
    Eigen::Quaterniond q(p.rotation());
    if (q.coeffs().dot(q0.coeffs()) < 0.0) q.coeffs() = -q.coeffs();
    qsum += q.coeffs();
    tsum += p.translation();
  }
  Eigen::Quaterniond mean_q;
  mean_q.coeffs() = qsum.normalized();
  RelativeExtrinsics out;
  out.source = a.camera;
  out.destination = b.camera;
  out.pose = RigidPose(mean_q.toRotationMatrix(), tsum / static_cast<double>(per_view.size()));
  out.views = static_cast<int>(per_view.size());
  for (const auto& p : per_view) {
    out.rotation_spread_deg = std::max(out.rotation_spread_deg,
                                       rotation_angle_between(p.rotation(), out.pose.rotation()) * 180.0 / M_PI);
    out.translation_spread_m = std::max(out.translation_spread_m, (p.translation() - out.pose.translation()).norm());
  }
  return out;
}

/// Calibration of every camera plus the RGB->secondary extrinsics.
struct CalibrationResult {
  std::map<CameraId, CameraCalibration> cameras;
  std::vector<RelativeExtrinsics> extrinsics;

  const CameraCalibration& camera(CameraId id) const {
    const auto it = cameras.find(id == CameraId::depth ? CameraId::rgb : id);
    if (it == cameras.end()) throw InvalidArgument("no calibration for camera " + std::string(to_string(id)));
    return it->second;
  }

  const RelativeExtrinsics& extrinsic(CameraId source, CameraId destination) const {
    for (const auto& e : extrinsics) {
      if (e.source == source && e.destination == destination) return e;
    }
    throw InvalidArgument("no extrinsics " + std::string(to_string(source)) + "->" + std::string(to_string(destination)));
  }
};

/// Refines every camera of a result independently against its observations.
inline CalibrationResult refine(const CalibrationResult& initial,
                                const std::map<CameraId, std::vector<GridObservation>>& observations,
                                const std::map<CameraId, RefineOptions>& options = {}) {
  CalibrationResult out;
  for (const auto& [id, cal] : initial.cameras) {
    const auto obs = observations.find(id);
    if (obs == observations.end()) throw InvalidArgument("missing observations for " + std::string(to_string(id)));
    const auto opt = options.find(id);
    out.cameras[id] = refine(cal, obs->second, opt == options.end() ? RefineOptions{} : opt->second);
  }
  for (const auto& e : initial.extrinsics) {
    out.extrinsics.push_back(relative_extrinsics(out.cameras.at(e.source), out.cameras.at(e.destination)));
  }
  return out;
}

/// Per-camera refinement settings. The 160x120 thermal camera keeps k3 at zero by default:
/// its small field of view leaves the sixth-order term unobservable.
struct CalibrationOptions {
  std::map<CameraId, RefineOptions> refine{{CameraId::thermal, RefineOptions{.fix_k3 = true}}};

  RefineOptions for_camera(CameraId id) const {
    const auto it = refine.find(id);
    return it == refine.end() ? RefineOptions{} : it->second;
  }
};

/// Detected grids of one camera together with its raster size.
struct CameraObservations {
  int width = 0;
  int height = 0;
  std::vector<GridObservation> views;
};

/// Calibrates every camera independently, then derives RGB->secondary extrinsics from the
/// views each secondary shares with the RGB camera.
inline CalibrationResult calibrate_rig(const std::map<CameraId, CameraObservations>& data,
                                       const CalibrationOptions& opt = {},
                                       std::map<CameraId, RefineReport>* reports = nullptr) {
  if (!data.contains(CameraId::rgb)) throw InvalidArgument("RGB observations are required as the reference");
  CalibrationResult out;
  for (const auto& [id, cam] : data) {
    RefineReport rep;
    out.cameras[id] = calibrate_camera(id, cam.views, cam.width, cam.height, opt.for_camera(id), &rep);
    if (reports) (*reports)[id] = rep;
  }
  for (const auto& [id, cal] : out.cameras) {
    if (id != CameraId::rgb) out.extrinsics.push_back(relative_extrinsics(out.cameras.at(CameraId::rgb), cal));
  }
  return out;
}

}  // namespace msv
