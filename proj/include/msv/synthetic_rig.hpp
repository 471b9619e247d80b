#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include "msv/camera_model.hpp"
#include "msv/errors.hpp"
#include "msv/raster.hpp"

namespace msv {

enum class CameraId { rgb, thermal, uv, depth };
enum class Spectrum { rgb, thermal, uv };

inline std::string_view to_string(CameraId id) {
  switch (id) {
    case CameraId::rgb: return "rgb";
    case CameraId::thermal: return "thermal";
    case CameraId::uv: return "uv";
    case CameraId::depth: return "depth";
  }
  return "?";
}

inline CameraId parse_camera_id(std::string_view s) {
  if (s == "rgb") return CameraId::rgb;
  if (s == "thermal") return CameraId::thermal;
  if (s == "uv") return CameraId::uv;
  if (s == "depth") return CameraId::depth;
  throw InvalidArgument("unknown camera id '" + std::string(s) + "'");
}

inline CameraId camera_of(Spectrum s) {
  switch (s) {
    case Spectrum::rgb: return CameraId::rgb;
    case Spectrum::thermal: return CameraId::thermal;
    case Spectrum::uv: return CameraId::uv;
  }
  return CameraId::rgb;
}

/// One physical camera: intrinsics and the rig->camera transform.
struct CameraSetup {
  CameraIntrinsics intrinsics;
  RigidPose pose;
};

/// The four-camera rig. The rig frame is the RGB camera frame; depth shares RGB geometry.
struct RigConfig {
  CameraSetup rgb;
  CameraSetup thermal;
  CameraSetup uv;

  const CameraSetup& camera(CameraId id) const {
    switch (id) {
      case CameraId::thermal: return thermal;
      case CameraId::uv: return uv;
      case CameraId::rgb:
      case CameraId::depth: return rgb;
    }
    return rgb;
  }

  void validate() const {
    rgb.intrinsics.validate();
    thermal.intrinsics.validate();
    uv.intrinsics.validate();
  }
};

/// Camera whose optical center sits at `center` (rig frame) with the given small rotation.
inline RigidPose camera_pose_from_center(const Eigen::Vector3d& center, const Eigen::Matrix3d& rig_to_camera) {
  return RigidPose(rig_to_camera, -rig_to_camera * center);
}

inline Eigen::Matrix3d rotation_xyz_deg(double rx, double ry, double rz) {
  constexpr double kDeg = M_PI / 180.0;
  return (Eigen::AngleAxisd(rz * kDeg, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(ry * kDeg, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(rx * kDeg, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

/// Rig shaped after the device table: 640x480 RGB-D at 74 deg, 640x480 UV at 55 deg,
/// 160x120 LWIR at 57 deg. UV and thermal sit 3 cm either side of the RGB camera.
inline RigConfig default_rig() {
  RigConfig rig;
  rig.rgb.intrinsics = intrinsics_from_fov(640, 480, 74.0);
  rig.rgb.intrinsics.cx = 321.7;
  rig.rgb.intrinsics.cy = 238.4;
  rig.rgb.intrinsics.fy *= 1.002;
  rig.rgb.intrinsics.distortion = {0.045, -0.02, 0.0004, -0.0003, 0.0};
  rig.rgb.pose = RigidPose::identity();

  rig.uv.intrinsics = intrinsics_from_fov(640, 480, 55.0);
  rig.uv.intrinsics.cx = 317.9;
  rig.uv.intrinsics.cy = 243.1;
  rig.uv.intrinsics.distortion = {-0.09, 0.03, -0.0005, 0.0004, 0.0};
  rig.uv.pose = camera_pose_from_center({0.03, 0.002, -0.004}, rotation_xyz_deg(0.6, -1.4, 0.3));

  rig.thermal.intrinsics = intrinsics_from_fov(160, 120, 57.0);
  rig.thermal.intrinsics.cx = 80.6;
  rig.thermal.intrinsics.cy = 59.2;
  rig.thermal.intrinsics.distortion = {-0.12, 0.04, 0.0003, 0.0002, 0.0};
  rig.thermal.pose = camera_pose_from_center({-0.03, -0.003, 0.002}, rotation_xyz_deg(-0.8, 1.1, -0.5));
  return rig;
}

/// Ground-truth transform taking RGB-frame points into the given camera frame.
inline RigidPose rig_relative_pose(const RigConfig& rig, CameraId from, CameraId to) {
  return rig.camera(to).pose * rig.camera(from).pose.inverse();
}

/// Intensities in [0, 1]: heated/white plate, dark holes, and whatever surrounds the target.
struct SpectrumContrast {
  double plate = 0.9;
  double hole = 0.05;
  double surround = 0.6;
};

/// Planar circle-grid target. Circle (r, c) sits at (c * pitch, r * pitch, 0) in the target frame.
struct TargetSpec {
  int rows = 5;
  int cols = 7;
  double pitch = 0.03;
  double radius = 0.008;
  /// Plate border beyond the outermost circle centers.
  double margin = 0.025;
  SpectrumContrast rgb{0.9, 0.05, 0.6};
  SpectrumContrast thermal{0.8, 0.2, 0.5};
  SpectrumContrast uv{0.75, 0.08, 0.5};

  const SpectrumContrast& contrast(Spectrum s) const {
    switch (s) {
      case Spectrum::thermal: return thermal;
      case Spectrum::uv: return uv;
      case Spectrum::rgb: return rgb;
    }
    return rgb;
  }

  std::size_t count() const { return static_cast<std::size_t>(rows) * cols; }

  void validate() const {
    if (rows < 3 || cols < 3) throw InvalidArgument("target needs at least 3x3 circles");
    if (!(pitch > 0.0) || !(radius > 0.0) || !(radius < 0.5 * pitch)) {
      throw InvalidArgument("target radius must be below half the pitch");
    }
    if (!(margin > radius)) throw InvalidArgument("target margin must exceed the radius");
    for (Spectrum s : {Spectrum::rgb, Spectrum::thermal, Spectrum::uv}) {
      const auto& c = contrast(s);
      if (!(c.plate >= c.hole) || c.plate > 1.0 || c.hole < 0.0) {
        throw InvalidArgument("target plate must be at least as bright as the holes");
      }
      if (!(c.surround >= 0.0 && c.surround <= 1.0)) throw InvalidArgument("surround intensity must be in [0, 1]");
    }
  }

  /// Row-major circle centers in the target frame.
  std::vector<WorldPoint> object_points() const {
    std::vector<WorldPoint> pts;
    pts.reserve(count());
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) pts.emplace_back(c * pitch, r * pitch, 0.0);
    }
    return pts;
  }

  Eigen::Vector2d plate_min() const { return {-margin, -margin}; }
  Eigen::Vector2d plate_max() const { return {(cols - 1) * pitch + margin, (rows - 1) * pitch + margin}; }
  WorldPoint center() const { return {0.5 * (cols - 1) * pitch, 0.5 * (rows - 1) * pitch, 0.0}; }
};

/// Target->rig pose placing the grid center at `position` with the given tilt (degrees).
inline RigidPose target_pose(const TargetSpec& target, const Eigen::Vector3d& position, double rx_deg,
                             double ry_deg, double rz_deg) {
  const Eigen::Matrix3d r = rotation_xyz_deg(rx_deg, ry_deg, rz_deg);
  return RigidPose(r, position - r * target.center());
}

/// Calibration views spread over the shared field of view with up to 30 deg of tilt.
inline std::vector<RigidPose> default_calibration_views(const TargetSpec& target, int count = 10) {
  struct View {
    double x, y, z, rx, ry, rz;
  };
  static constexpr std::array<View, 14> kViews{{
      {0.00, 0.00, 0.42, 22.0, 0.0, 2.0},
      {0.00, 0.00, 0.45, 0.0, -25.0, -3.0},
      {0.07, 0.05, 0.44, -18.0, 20.0, 4.0},
      {-0.07, 0.05, 0.44, -20.0, -18.0, -2.0},
      {0.07, -0.05, 0.46, 20.0, 15.0, 1.0},
      {-0.07, -0.05, 0.46, 16.0, -22.0, 5.0},
      {0.09, 0.00, 0.50, 5.0, 28.0, -4.0},
      {-0.09, 0.00, 0.50, -8.0, -28.0, 3.0},
      {0.00, 0.07, 0.48, -28.0, 6.0, -1.0},
      {0.00, -0.07, 0.48, 28.0, -5.0, 2.0},
      {0.04, 0.03, 0.40, 12.0, 12.0, 6.0},
      {-0.04, -0.03, 0.52, -12.0, 10.0, -6.0},
      {0.05, -0.02, 0.43, -25.0, -12.0, 0.0},
      {-0.05, 0.02, 0.47, 25.0, 14.0, 0.0},
  }};
  if (count < 1 || count > static_cast<int>(kViews.size())) {
    throw InvalidArgument("view count must be in [1, " + std::to_string(kViews.size()) + "]");
  }
  std::vector<RigidPose> poses;
  for (int i = 0; i < count; ++i) {
    const auto& v = kViews[i];
    poses.push_back(target_pose(target, {v.x, v.y, v.z}, v.rx, v.ry, v.rz));
  }
  return poses;
}

/// Rectangle [x0, x1] x [y0, y1] in the local frame of a scene plane.
struct PlaneRect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

/// Textured plane. Local plane frame: z is the normal, extent is the rectangle on z = 0.
struct ScenePlane {
  RigidPose pose;  // plane -> rig
  PlaneRect extent;
  Eigen::Vector3d albedo{0.6, 0.55, 0.5};
  Eigen::Vector3d albedo_alt{0.35, 0.4, 0.45};
  /// Checker cell size in meters; 0 disables the texture.
  double checker = 0.0;
  double thermal = 0.3;
  double uv = 0.2;
};

/// Region on a plane that is bright in exactly one spectrum.
struct ScenePatch {
  int plane = 0;
  PlaneRect region;
  double intensity = 0.9;
};

struct NoiseSpec {
  double rgb = 0.0;
  double thermal = 0.0;
  double uv = 0.0;
};

struct SceneSpec {
  std::vector<ScenePlane> planes;
  std::vector<ScenePatch> hidden_uv_patches;
  std::vector<ScenePatch> hidden_thermal_patches;
  NoiseSpec noise;
  /// Fraction of valid depth pixels dropped to 0 (sensor dropouts).
  double invalid_depth_fraction = 0.0;
  Eigen::Vector3d background{0.0, 0.0, 0.0};

  void validate() const {
    if (planes.empty()) throw EmptyScene("scene has no planes");
    for (const auto* list : {&hidden_uv_patches, &hidden_thermal_patches}) {
      for (const auto& p : *list) {
        if (p.plane < 0 || p.plane >= static_cast<int>(planes.size())) {
          throw InvalidArgument("patch refers to a missing plane");
        }
        const auto& e = planes[p.plane].extent;
        if (!e.contains(p.region.x0, p.region.y0) || !e.contains(p.region.x1, p.region.y1)) {
          throw InvalidArgument("patch must lie on its plane");
        }
      }
    }
    if (!(invalid_depth_fraction >= 0.0 && invalid_depth_fraction <= 1.0)) {
      throw InvalidArgument("invalid_depth_fraction must be in [0, 1]");
    }
  }
};

/// Fronto-parallel plane at `distance` meters large enough to fill every camera.
inline SceneSpec full_frame_plane_scene(double distance = 1.0) {
  SceneSpec s;
  ScenePlane p;
  p.pose = RigidPose(Eigen::Matrix3d::Identity(), {0.0, 0.0, distance});
  const double half = 2.0 * distance;
  p.extent = {-half, -half, half, half};
  p.checker = 0.05;
  s.planes.push_back(p);
  return s;
}

/// Test board in front of a wall: a UV-only painted region and a covered heater strip.
inline SceneSpec hidden_feature_scene() {
  SceneSpec s = full_frame_plane_scene(1.6);
  s.planes[0].albedo = {0.5, 0.5, 0.45};
  s.planes[0].checker = 0.0;
  ScenePlane board;
  board.pose = RigidPose(rotation_xyz_deg(4.0, -6.0, 0.0), {0.0, 0.0, 1.0});
  board.extent = {-0.5, -0.35, 0.5, 0.35};
  board.albedo = {0.8, 0.3, 0.2};
  board.albedo_alt = {0.2, 0.6, 0.3};
  board.checker = 0.04;
  board.thermal = 0.3;
  board.uv = 0.2;
  s.planes.push_back(board);
  s.hidden_uv_patches.push_back({1, {-0.30, -0.08, -0.14, 0.08}, 0.9});
  s.hidden_thermal_patches.push_back({1, {0.10, -0.08, 0.26, 0.08}, 0.9});
  return s;
}

/// Synchronized rasters of the four cameras.
struct MultispectralFrame {
  Image8 rgb;      // H x W x 3
  Image16 thermal;
  Image8 uv;
  Image16 depth;   // millimeters in the RGB frame, 0 = invalid
  std::uint64_t timestamp = 0;
};

struct RenderOptions {
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  int supersample = 4;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline void add_noise(GrayImage& img, double sigma, std::uint64_t seed) {
  if (sigma <= 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (double& v : img.data()) v = std::clamp(v + n(rng), 0.0, 1.0);
}

/// Where a camera-frame ray (x, y, 1) meets the target plate, in target coordinates.
struct TargetHit {
  Eigen::Vector2d local;
  double depth;
};

inline std::optional<TargetHit> intersect_target(const RigidPose& target_to_camera, const Eigen::Vector3d& ray) {
  const Eigen::Vector3d n = target_to_camera.rotation().col(2);
  const double denom = n.dot(ray);
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const double s = n.dot(target_to_camera.translation()) / denom;
  if (!(s > 0.0)) return std::nullopt;
  const Eigen::Vector3d local = target_to_camera.rotation().transpose() * (s * ray - target_to_camera.translation());
  return TargetHit{local.head<2>(), s * ray.z()};
}

inline double subsample_offset(int i, int n) { return (i + 0.5) / n - 0.5; }

inline std::optional<Eigen::Vector3d> pixel_ray(const CameraIntrinsics& intr, const PixelCoord& p) {
  try {
    const Eigen::Vector2d n = undistort_normalized(intr.distortion, pixel_to_normalized(intr, p));
    return Eigen::Vector3d(n.x(), n.y(), 1.0);
  } catch (const NoConvergence&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Renders one spectrum of the circle-grid target as intensities in [0, 1].
/// The plate is ray-cast; each hole is drawn as the local affine image of its circle,
/// centered exactly on the projected circle center, with a one-pixel anti-aliased edge.
inline GrayImage render_target_view(const CameraIntrinsics& intr, const RigidPose& target_to_camera,
                                    const TargetSpec& target, Spectrum spectrum, const RenderOptions& opt = {}) {
  intr.validate();
  target.validate();
  const Eigen::Vector2d lo = target.plate_min();
  const Eigen::Vector2d hi = target.plate_max();
  bool any_in_front = false;
  for (const auto& corner : {Eigen::Vector3d(lo.x(), lo.y(), 0), Eigen::Vector3d(hi.x(), lo.y(), 0),
                             Eigen::Vector3d(lo.x(), hi.y(), 0), Eigen::Vector3d(hi.x(), hi.y(), 0)}) {
    if (target_to_camera.apply(corner).z() > 0.0) any_in_front = true;
  }
  if (!any_in_front) throw TargetBehindCamera("target is entirely behind the camera");

  const auto& contrast = target.contrast(spectrum);
  const int w = intr.width;
  const int h = intr.height;
  const int ss = std::max(1, opt.supersample);

  auto on_plate = [&](const PixelCoord& p) {
    const auto ray = detail::pixel_ray(intr, p);
    if (!ray) return false;
    const auto hit = detail::intersect_target(target_to_camera, *ray);
    return hit && hit->local.x() >= lo.x() && hit->local.x() <= hi.x() && hit->local.y() >= lo.y() &&
           hit->local.y() <= hi.y();
  };

  // Plate membership at pixel corners; only pixels whose corners disagree are supersampled.
  std::vector<std::uint8_t> corner(static_cast<std::size_t>(w + 1) * (h + 1));
  for (int y = 0; y <= h; ++y) {
    for (int x = 0; x <= w; ++x) corner[static_cast<std::size_t>(y) * (w + 1) + x] = on_plate({x - 0.5, y - 0.5});
  }
  GrayImage img(w, h, 1, contrast.surround);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t c0 = static_cast<std::size_t>(y) * (w + 1) + x;
      const int sum = corner[c0] + corner[c0 + 1] + corner[c0 + w + 1] + corner[c0 + w + 2];
      double coverage = sum / 4;  // 0 or 1 when all corners agree
      if (sum != 0 && sum != 4) {
        int inside = 0;
        for (int j = 0; j < ss; ++j) {
          for (int i = 0; i < ss; ++i) {
            inside += on_plate({x + detail::subsample_offset(i, ss), y + detail::subsample_offset(j, ss)});
          }
        }
        coverage = static_cast<double>(inside) / (ss * ss);
      }
      img.at(x, y) = contrast.surround + coverage * (contrast.plate - contrast.surround);
    }
  }

  for (const WorldPoint& center : target.object_points()) {
    const WorldPoint pc = target_to_camera.apply(center);
    if (pc.z() <= 0.0) continue;
    const ProjectionJacobian pj = project_with_jacobian(pc, intr);
    const Eigen::Matrix2d jac = pj.d_point * target_to_camera.rotation().leftCols<2>();
    if (std::abs(jac.determinant()) < 1e-12) continue;
    const Eigen::Matrix2d to_unit = jac.inverse() / target.radius;
    const double half_u = target.radius * jac.row(0).norm() + 1.5;
    const double half_v = target.radius * jac.row(1).norm() + 1.5;
    const PixelCoord c = pj.pixel;
    const int x0 = std::max(0, static_cast<int>(std::floor(c.x() - half_u)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(c.x() + half_u)));
    const int y0 = std::max(0, static_cast<int>(std::floor(c.y() - half_v)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(c.y() + half_v)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double hole = 0.0;
        for (int j = 0; j < ss; ++j) {
          for (int i = 0; i < ss; ++i) {
            const Eigen::Vector2d d(x + detail::subsample_offset(i, ss) - c.x(), y + detail::subsample_offset(j, ss) - c.y());
            const Eigen::Vector2d q = to_unit * d;
            const double qn = q.norm();
            double cov;
            if (qn < 1e-12) {
              cov = 1.0;
            } else {
              const double grad = (to_unit.transpose() * (q / qn)).norm();
              cov = std::clamp(0.5 - (qn - 1.0) / grad, 0.0, 1.0);
            }
            hole += cov;
          }
        }
        hole /= ss * ss;
        img.at(x, y) -= hole * (contrast.plate - contrast.hole);
      }
    }
  }
  detail::add_noise(img, opt.noise_sigma, opt.seed);
  return img;
}

/// Depth (mm, z in the camera frame) of the target plate seen by one camera; 0 off the plate.
inline Image16 render_target_depth(const CameraIntrinsics& intr, const RigidPose& target_to_camera,
                                   const TargetSpec& target) {
  Image16 depth(intr.width, intr.height);
  const Eigen::Vector2d lo = target.plate_min();
  const Eigen::Vector2d hi = target.plate_max();
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const auto ray = detail::pixel_ray(intr, {x, y});
      if (!ray) continue;
      const auto hit = detail::intersect_target(target_to_camera, *ray);
      if (!hit || hit->local.x() < lo.x() || hit->local.x() > hi.x() || hit->local.y() < lo.y() ||
          hit->local.y() > hi.y()) {
        continue;
      }
      depth.at(x, y) = saturate_cast<std::uint16_t>(hit->depth * 1000.0);
    }
  }
  return depth;
}

inline Image8 gray_to_rgb8(const GrayImage& g) {
  Image8 out(g.width(), g.height(), 3);
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      const auto v = saturate_cast<std::uint8_t>(g.at(x, y) * 255.0);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = v;
    }
  }
  return out;
}

/// Noise seed for one (view, spectrum) pair derived from a single user seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t view, std::uint64_t stream) {
  return detail::splitmix64(detail::splitmix64(seed ^ (view * 0x100000001B3ull)) + stream);
}

/// All four rasters for one physical placement of the target (target->rig pose).
inline MultispectralFrame render_calibration_frame(const RigConfig& rig, const TargetSpec& target,
                                                   const RigidPose& target_to_rig, double noise_sigma,
                                                   std::uint64_t seed, std::uint64_t view_index) {
  MultispectralFrame f;
  RenderOptions opt;
  opt.noise_sigma = noise_sigma;
  auto render = [&](Spectrum s) {
    const auto& cam = rig.camera(camera_of(s));
    opt.seed = derive_seed(seed, view_index, static_cast<std::uint64_t>(s));
    return render_target_view(cam.intrinsics, cam.pose * target_to_rig, target, s, opt);
  };
  f.rgb = gray_to_rgb8(render(Spectrum::rgb));
  f.thermal = convert<std::uint16_t>(render(Spectrum::thermal), 65535.0);
  f.uv = convert<std::uint8_t>(render(Spectrum::uv), 255.0);
  f.depth = render_target_depth(rig.rgb.intrinsics, rig.rgb.pose * target_to_rig, target);
  f.timestamp = view_index;
  return f;
}

namespace detail {

struct SceneHit {
  int plane = -1;
  Eigen::Vector2d local;
  double range = 0.0;  // ray parameter for a direction with unit z in the camera frame
};

/// Nearest plane hit for a ray given in the camera frame of `cam`.
inline SceneHit cast(const SceneSpec& scene, const RigidPose& rig_to_camera, const Eigen::Vector3d& ray_cam) {
  const Eigen::Matrix3d rt = rig_to_camera.rotation().transpose();
  const Eigen::Vector3d origin = -rt * rig_to_camera.translation();
  const Eigen::Vector3d dir = rt * ray_cam;
  SceneHit best;
  for (int i = 0; i < static_cast<int>(scene.planes.size()); ++i) {
    const auto& pl = scene.planes[i];
    const Eigen::Vector3d n = pl.pose.rotation().col(2);
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-15) continue;
    const double s = n.dot(pl.pose.translation() - origin) / denom;
    if (!(s > 0.0) || (best.plane >= 0 && s >= best.range)) continue;
    const Eigen::Vector3d local = pl.pose.rotation().transpose() * (origin + s * dir - pl.pose.translation());
    if (!pl.extent.contains(local.x(), local.y())) continue;
    best.plane = i;
    best.local = local.head<2>();
    best.range = s;
  }
  return best;
}

inline double patch_value(const std::vector<ScenePatch>& patches, const SceneHit& hit, double base) {
  double v = base;
  for (const auto& p : patches) {
    if (p.plane == hit.plane && p.region.contains(hit.local.x(), hit.local.y())) v = p.intensity;
  }
  return v;
}

inline Eigen::Vector3d albedo_at(const ScenePlane& pl, const Eigen::Vector2d& local) {
  if (pl.checker <= 0.0) return pl.albedo;
  const auto cx = static_cast<long>(std::floor(local.x() / pl.checker));
  const auto cy = static_cast<long>(std::floor(local.y() / pl.checker));
  return ((cx + cy) % 2 == 0) ? pl.albedo : pl.albedo_alt;
}

/// Supersampled shading of one camera; `shade` maps a hit (or miss) to `channels` values.
template <typename Shade>
Raster<double> render_camera(const SceneSpec& scene, const CameraSetup& cam, int channels, int ss, Shade shade) {
  const auto& intr = cam.intrinsics;
  Raster<double> img(intr.width, intr.height, channels);
  std::vector<double> acc(channels);
  std::vector<double> val(channels);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int j = 0; j < ss; ++j) {
        for (int i = 0; i < ss; ++i) {
          const auto ray = pixel_ray(intr, {x + subsample_offset(i, ss), y + subsample_offset(j, ss)});
          SceneHit hit;
          if (ray) hit = cast(scene, cam.pose, *ray);
          shade(hit, val);
          for (int c = 0; c < channels; ++c) acc[c] += val[c];
        }
      }
      for (int c = 0; c < channels; ++c) img.at(x, y, c) = acc[c] / (ss * ss);
    }
  }
  return img;
}

}  // namespace detail

/// Ray-casts the scene into every camera of the rig.
inline MultispectralFrame render_scene(const SceneSpec& scene, const RigConfig& rig, std::uint64_t seed = 0,
                                       std::uint64_t timestamp = 0, int supersample = 4) {
  scene.validate();
  rig.validate();
  const int ss = std::max(1, supersample);
  MultispectralFrame f;
  f.timestamp = timestamp;

  auto rgb = detail::render_camera(scene, rig.rgb, 3, ss, [&](const detail::SceneHit& hit, std::vector<double>& v) {
    const Eigen::Vector3d a = hit.plane < 0 ? scene.background : detail::albedo_at(scene.planes[hit.plane], hit.local);
    v[0] = a.x();
    v[1] = a.y();
    v[2] = a.z();
  });
  auto thermal = detail::render_camera(scene, rig.thermal, 1, ss, [&](const detail::SceneHit& hit, std::vector<double>& v) {
    v[0] = hit.plane < 0 ? 0.0 : detail::patch_value(scene.hidden_thermal_patches, hit, scene.planes[hit.plane].thermal);
  });
  auto uv = detail::render_camera(scene, rig.uv, 1, ss, [&](const detail::SceneHit& hit, std::vector<double>& v) {
    v[0] = hit.plane < 0 ? 0.0 : detail::patch_value(scene.hidden_uv_patches, hit, scene.planes[hit.plane].uv);
  });
  detail::add_noise(rgb, scene.noise.rgb, derive_seed(seed, timestamp, 10));
  detail::add_noise(thermal, scene.noise.thermal, derive_seed(seed, timestamp, 11));
  detail::add_noise(uv, scene.noise.uv, derive_seed(seed, timestamp, 12));
  f.rgb = convert<std::uint8_t>(rgb, 255.0);
  f.thermal = convert<std::uint16_t>(thermal, 65535.0);
  f.uv = convert<std::uint8_t>(uv, 255.0);

  const auto& intr = rig.rgb.intrinsics;
  f.depth = Image16(intr.width, intr.height);
  std::vector<std::size_t> valid;
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const auto ray = detail::pixel_ray(intr, {x, y});
      if (!ray) continue;
      const auto hit = detail::cast(scene, rig.rgb.pose, *ray);
      if (hit.plane < 0) continue;
      f.depth.at(x, y) = saturate_cast<std::uint16_t>(hit.range * 1000.0);
      if (f.depth.at(x, y) != 0) valid.push_back(static_cast<std::size_t>(y) * intr.width + x);
    }
  }
  if (scene.invalid_depth_fraction > 0.0) {
    const auto drop = static_cast<std::size_t>(std::llround(scene.invalid_depth_fraction * valid.size()));
    std::mt19937_64 rng(derive_seed(seed, timestamp, 13));
    for (std::size_t i = 0; i < drop; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, valid.size() - 1);
      std::swap(valid[i], valid[pick(rng)]);
      f.depth.data()[valid[i]] = 0;
    }
  }
  return f;
}

/// RGB pixels whose center ray hits the given patch first (ground-truth footprint mask).
inline Image8 patch_footprint(const SceneSpec& scene, const RigConfig& rig, const ScenePatch& patch) {
  const auto& intr = rig.rgb.intrinsics;
  Image8 mask(intr.width, intr.height);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const auto ray = detail::pixel_ray(intr, {x, y});
      if (!ray) continue;
      const auto hit = detail::cast(scene, rig.rgb.pose, *ray);
      if (hit.plane == patch.plane && patch.region.contains(hit.local.x(), hit.local.y())) mask.at(x, y) = 1;
    }
  }
  return mask;
}

namespace detail {

/// Newton inversion of the distortion polynomial; kept separate from the fixed-point
/// solver used by the pipeline so the oracle does not share its code path.
inline std::optional<Eigen::Vector2d> newton_undistort(const DistortionCoefficients& d, const Eigen::Vector2d& target) {
  Eigen::Vector2d p = target;
  for (int it = 0; it < 50; ++it) {
    const double x = p.x();
    const double y = p.y();
    const double r2 = x * x + y * y;
    const double rad = 1.0 + d.k1 * r2 + d.k2 * r2 * r2 + d.k3 * r2 * r2 * r2;
    const double drad = d.k1 + 2.0 * d.k2 * r2 + 3.0 * d.k3 * r2 * r2;
    const Eigen::Vector2d f(x * rad + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x) - target.x(),
                            y * rad + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y - target.y());
    Eigen::Matrix2d j;
    j << rad + 2.0 * x * x * drad + 2.0 * d.p1 * y + 6.0 * d.p2 * x, 2.0 * x * y * drad + 2.0 * d.p1 * x + 2.0 * d.p2 * y,
        2.0 * x * y * drad + 2.0 * d.p1 * x + 2.0 * d.p2 * y, rad + 2.0 * y * y * drad + 6.0 * d.p1 * y + 2.0 * d.p2 * x;
    const Eigen::Vector2d step = j.partialPivLu().solve(f);
    p -= step;
    if (!p.allFinite()) return std::nullopt;
    if (step.norm() < 1e-15) break;
  }
  return p;
}

}  // namespace detail

/// Exact RGB->secondary pixel map using the rig's ground truth. Raw (distorted) pixels in and out.
inline PixelCoord ground_truth_map(const RigConfig& rig, const PixelCoord& rgb_pixel, double depth,
                                   CameraId target_camera) {
  if (!(depth > 0.0)) throw NonPositiveDepth("bad point: depth must be positive");
  const auto& src = rig.rgb.intrinsics;
  const Eigen::Vector3d homog = src.matrix().inverse() * Eigen::Vector3d(rgb_pixel.x(), rgb_pixel.y(), 1.0);
  const auto ideal = detail::newton_undistort(src.distortion, homog.head<2>());
  if (!ideal) throw NoConvergence("ground-truth undistortion failed");
  const Eigen::Vector3d in_rgb = Eigen::Vector3d(ideal->x(), ideal->y(), 1.0) * depth;
  const auto& rgb_pose = rig.rgb.pose;
  const Eigen::Vector3d in_rig = rgb_pose.rotation().transpose() * (in_rgb - rgb_pose.translation());
  const auto& dst = rig.camera(target_camera);
  const Eigen::Vector4d in_dst = dst.pose.matrix() * in_rig.homogeneous();
  if (!(in_dst.z() > 0.0)) throw NonPositiveDepth("point behind the target camera");
  const Eigen::Vector2d n = in_dst.head<2>() / in_dst.z();
  const auto& d = dst.intrinsics.distortion;
  const double r2 = n.squaredNorm();
  const double rad = 1.0 + d.k1 * r2 + d.k2 * r2 * r2 + d.k3 * r2 * r2 * r2;
  const Eigen::Vector3d distorted(n.x() * rad + 2.0 * d.p1 * n.x() * n.y() + d.p2 * (r2 + 2.0 * n.x() * n.x()),
                                  n.y() * rad + d.p1 * (r2 + 2.0 * n.y() * n.y()) + 2.0 * d.p2 * n.x() * n.y(), 1.0);
  const Eigen::Vector3d px = dst.intrinsics.matrix() * distorted;
  return px.head<2>();
}

}  // namespace msv
