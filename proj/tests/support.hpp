#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "msv/calibration.hpp"
#include "msv/synthetic_rig.hpp"
#include "msv/target_detect.hpp"

namespace msv::test {

inline CameraIntrinsics simple_intrinsics(int w = 640, int h = 480, double f = 500.0) {
  CameraIntrinsics k;
  k.width = w;
  k.height = h;
  k.fx = f;
  k.fy = f;
  k.cx = w / 2.0;
  k.cy = h / 2.0;
  return k;
}

inline std::string view_name(int v) { return "view_" + std::to_string(v); }

/// Renders the default calibration views and detects the grid in every camera.
inline std::map<CameraId, CameraObservations> rig_observations(const RigConfig& rig, const TargetSpec& target,
                                                               int views) {
  std::map<CameraId, CameraObservations> obs;
  for (CameraId id : {CameraId::rgb, CameraId::thermal, CameraId::uv}) {
    obs[id].width = rig.camera(id).intrinsics.width;
    obs[id].height = rig.camera(id).intrinsics.height;
  }
  const auto poses = default_calibration_views(target, views);
  for (int v = 0; v < views; ++v) {
    const auto f = render_calibration_frame(rig, target, poses[v], 0.0, 0, static_cast<std::uint64_t>(v));
    obs[CameraId::rgb].views.push_back(detect_grid(f.rgb, target, view_name(v), CameraId::rgb));
    obs[CameraId::thermal].views.push_back(detect_grid(f.thermal, target, view_name(v), CameraId::thermal));
    obs[CameraId::uv].views.push_back(detect_grid(f.uv, target, view_name(v), CameraId::uv));
  }
  return obs;
}

/// Adds independent Gaussian noise of `sigma` pixels to every detected center.
inline void perturb(std::map<CameraId, CameraObservations>& obs, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& [id, cam] : obs) {
    for (auto& view : cam.views) {
      for (auto& p : view.image_points) p += PixelCoord(n(rng), n(rng));
    }
  }
}

/// Noiseless ten-view calibration of the default rig, computed once per test binary.
inline const CalibrationResult& default_rig_calibration() {
  static const CalibrationResult result = [] {
    const auto obs = rig_observations(default_rig(), TargetSpec{}, 10);
    return calibrate_rig(obs);
  }();
  return result;
}

inline double rotation_error_deg(const RigidPose& a, const RigidPose& b) {
  return rotation_angle_between(a.rotation(), b.rotation()) * 180.0 / M_PI;
}

inline double translation_error_m(const RigidPose& a, const RigidPose& b) {
  return (a.translation() - b.translation()).norm();
}

}  // namespace msv::test
