#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "msv/errors.hpp"

namespace msv {

/// Sub-pixel image coordinate (u right, v down). Integer values are pixel centers.
using PixelCoord = Eigen::Vector2d;

/// 3D point in meters, expressed in a camera or target frame.
using WorldPoint = Eigen::Vector3d;

/// Brown-Conrady coefficients in the usual (k1, k2, p1, p2, k3) convention.
struct DistortionCoefficients {
  double k1 = 0.0;
  double k2 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  double k3 = 0.0;

  bool is_zero() const { return k1 == 0.0 && k2 == 0.0 && p1 == 0.0 && p2 == 0.0 && k3 == 0.0; }
  bool is_finite() const {
    return std::isfinite(k1) && std::isfinite(k2) && std::isfinite(p1) && std::isfinite(p2) &&
           std::isfinite(k3);
  }

  friend bool operator==(const DistortionCoefficients&, const DistortionCoefficients&) = default;
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double skew = 0.0;
  int width = 1;
  int height = 1;
  DistortionCoefficients distortion;

  /// Throws InvalidArgument when the pinhole invariants do not hold.
  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InvalidArgument("image size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
      throw InvalidArgument("principal point must lie inside the image");
    }
    if (!std::isfinite(skew) || !distortion.is_finite()) throw InvalidArgument("non-finite intrinsics");
  }

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d k;
    k << fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  CameraIntrinsics without_distortion() const {
    CameraIntrinsics c = *this;
    c.distortion = {};
    return c;
  }

  bool contains(const PixelCoord& p) const {
    return p.x() >= -0.5 && p.y() >= -0.5 && p.x() <= width - 0.5 && p.y() <= height - 0.5;
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Rigid transform x' = R x + t. The rotation is checked on construction.
class RigidPose {
 public:
  static constexpr double kOrthonormalTolerance = 1e-9;

  RigidPose() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}

  RigidPose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {
    if (!rotation_.allFinite() || !translation_.allFinite()) throw InvalidPose("non-finite pose");
    const double ortho = (rotation_.transpose() * rotation_ - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > kOrthonormalTolerance || std::abs(rotation_.determinant() - 1.0) > kOrthonormalTolerance) {
      throw InvalidPose("rotation is not a proper orthonormal matrix");
    }
  }

  static RigidPose identity() { return {}; }

  static RigidPose from_axis_angle(const Eigen::Vector3d& omega, const Eigen::Vector3d& translation) {
    const double angle = omega.norm();
    if (angle == 0.0) return RigidPose(Eigen::Matrix3d::Identity(), translation);
    return RigidPose(Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix(), translation);
  }

  static RigidPose from_matrix(const Eigen::Matrix4d& m) {
    return RigidPose(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
  }

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Eigen::Vector3d axis_angle() const {
    const Eigen::AngleAxisd aa(rotation_);
    return aa.axis() * aa.angle();
  }

  /// Homogeneous 4x4 form [R t; 0 1].
  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

  RigidPose inverse() const {
    const Eigen::Matrix3d rt = rotation_.transpose();
    return RigidPose(rt, -rt * translation_);
  }

  WorldPoint apply(const WorldPoint& p) const { return rotation_ * p + translation_; }

  /// (a * b) applies b first, then a.
  friend RigidPose operator*(const RigidPose& a, const RigidPose& b) {
    return RigidPose(a.rotation_ * b.rotation_, a.rotation_ * b.translation_ + a.translation_);
  }

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

/// Angle of the rotation taking a to b, in radians.
inline double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c);
}

inline WorldPoint transform(const RigidPose& pose, const WorldPoint& point) { return pose.apply(point); }

/// Applies the Brown-Conrady model to a normalized image point.
inline Eigen::Vector2d distort_normalized(const DistortionCoefficients& d, const Eigen::Vector2d& p) {
  const double x = p.x();
  const double y = p.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
  return {x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x),
          y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y};
}

inline constexpr int kUndistortMaxIterations = 20;
inline constexpr double kUndistortTolerance = 1e-10;

/// Inverts distort_normalized by fixed-point iteration.
inline Eigen::Vector2d undistort_normalized(const DistortionCoefficients& d, const Eigen::Vector2d& distorted) {
  if (d.is_zero()) return distorted;
  Eigen::Vector2d p = distorted;
  for (int it = 0; it < kUndistortMaxIterations; ++it) {
    const double x = p.x();
    const double y = p.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
    const double dx = 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
    const double dy = d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
    const Eigen::Vector2d next((distorted.x() - dx) / radial, (distorted.y() - dy) / radial);
    if (!next.allFinite()) break;
    const double step = (next - p).norm();
    p = next;
    if (step < kUndistortTolerance) return p;
  }
  throw NoConvergence("undistortion did not converge");
}

inline PixelCoord normalized_to_pixel(const CameraIntrinsics& intr, const Eigen::Vector2d& n) {
  return {intr.fx * n.x() + intr.skew * n.y() + intr.cx, intr.fy * n.y() + intr.cy};
}

inline Eigen::Vector2d pixel_to_normalized(const CameraIntrinsics& intr, const PixelCoord& p) {
  const double y = (p.y() - intr.cy) / intr.fy;
  return {(p.x() - intr.cx - intr.skew * y) / intr.fx, y};
}

/// Projects a camera-frame point to a (distorted) pixel.
inline PixelCoord project(const WorldPoint& point, const CameraIntrinsics& intr) {
  if (!(point.z() > 0.0)) throw NonPositiveDepth("cannot project a point with z <= 0");
  const Eigen::Vector2d n(point.x() / point.z(), point.y() / point.z());
  return normalized_to_pixel(intr, distort_normalized(intr.distortion, n));
}

/// Back-projects an undistorted pixel to the point at the given z depth (meters).
inline WorldPoint unproject(const PixelCoord& pixel, double depth, const CameraIntrinsics& intr) {
  if (!(depth > 0.0)) throw NonPositiveDepth("depth must be positive");
  const Eigen::Vector2d n = pixel_to_normalized(intr, pixel);
  return {n.x() * depth, n.y() * depth, depth};
}

/// Removes lens distortion from a pixel; the result is the ideal pinhole pixel.
inline PixelCoord undistort_pixel(const PixelCoord& pixel, const CameraIntrinsics& intr) {
  if (!intr.contains(pixel)) throw InvalidArgument("pixel outside image bounds");
  if (intr.distortion.is_zero()) return pixel;
  return normalized_to_pixel(intr, undistort_normalized(intr.distortion, pixel_to_normalized(intr, pixel)));
}

/// Applies lens distortion to an ideal pinhole pixel.
inline PixelCoord distort_pixel(const PixelCoord& pixel, const CameraIntrinsics& intr) {
  return normalized_to_pixel(intr, distort_normalized(intr.distortion, pixel_to_normalized(intr, pixel)));
}

/// Projection together with its derivatives.
struct ProjectionJacobian {
  PixelCoord pixel;
  /// d(u,v) / d(X,Y,Z) of the camera-frame point.
  Eigen::Matrix<double, 2, 3> d_point;
  /// d(u,v) / d(fx, fy, cx, cy, k1, k2, p1, p2, k3).
  Eigen::Matrix<double, 2, 9> d_intrinsics;
};

inline ProjectionJacobian project_with_jacobian(const WorldPoint& point, const CameraIntrinsics& intr) {
  if (!(point.z() > 0.0)) throw NonPositiveDepth("cannot project a point with z <= 0");
  const auto& d = intr.distortion;
  const double iz = 1.0 / point.z();
  const double x = point.x() * iz;
  const double y = point.y() * iz;
  const double r2 = x * x + y * y;
  const double r4 = r2 * r2;
  const double r6 = r4 * r2;
  const double radial = 1.0 + d.k1 * r2 + d.k2 * r4 + d.k3 * r6;
  const double dradial = d.k1 + 2.0 * d.k2 * r2 + 3.0 * d.k3 * r4;  // d radial / d r2
  const double xd = x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;

  Eigen::Matrix2d d_dist;  // d(xd, yd) / d(x, y)
  d_dist(0, 0) = radial + 2.0 * x * x * dradial + 2.0 * d.p1 * y + 6.0 * d.p2 * x;
  d_dist(0, 1) = 2.0 * x * y * dradial + 2.0 * d.p1 * x + 2.0 * d.p2 * y;
  d_dist(1, 0) = 2.0 * x * y * dradial + 2.0 * d.p1 * x + 2.0 * d.p2 * y;
  d_dist(1, 1) = radial + 2.0 * y * y * dradial + 6.0 * d.p1 * y + 2.0 * d.p2 * x;

  Eigen::Matrix2d d_pix;  // d(u, v) / d(xd, yd)
  d_pix << intr.fx, intr.skew, 0.0, intr.fy;

  Eigen::Matrix<double, 2, 3> d_norm;
  d_norm << iz, 0.0, -x * iz, 0.0, iz, -y * iz;

  ProjectionJacobian out;
  out.pixel = {intr.fx * xd + intr.skew * yd + intr.cx, intr.fy * yd + intr.cy};
  out.d_point = d_pix * d_dist * d_norm;

  Eigen::Matrix<double, 2, 5> d_coeff;  // d(xd, yd) / d(k1, k2, p1, p2, k3)
  d_coeff << x * r2, x * r4, 2.0 * x * y, r2 + 2.0 * x * x, x * r6,
             y * r2, y * r4, r2 + 2.0 * y * y, 2.0 * x * y, y * r6;
  out.d_intrinsics.setZero();
  out.d_intrinsics(0, 0) = xd;
  out.d_intrinsics(1, 1) = yd;
  out.d_intrinsics(0, 2) = 1.0;
  out.d_intrinsics(1, 3) = 1.0;
  const Eigen::Matrix<double, 2, 5> d_dist_coeff = d_pix * d_coeff;
  // parameter order is k1, k2, p1, p2, k3
  out.d_intrinsics.block<2, 5>(0, 4) = d_dist_coeff;
  return out;
}

/// Intrinsics from a horizontal field of view, square pixels, centered principal point.
inline CameraIntrinsics intrinsics_from_fov(int width, int height, double hfov_deg) {
  CameraIntrinsics c;
  c.width = width;
  c.height = height;
  c.fx = c.fy = 0.5 * width / std::tan(0.5 * hfov_deg * M_PI / 180.0);
  c.cx = 0.5 * width;
  c.cy = 0.5 * height;
  return c;
}

}  // namespace msv
