#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "msv/calibration.hpp"
#include "msv/camera_model.hpp"
#include "msv/errors.hpp"
#include "msv/raster.hpp"
#include "msv/synthetic_rig.hpp"

namespace msv {

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Separable blur along one axis with replicated borders.
inline Raster<double> blur_axis(const Raster<double>& src, double sigma, bool horizontal) {
  if (sigma <= 0.0) return src;
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  Raster<double> out(src.width(), src.height(), src.channels());
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      for (int c = 0; c < src.channels(); ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int sx = horizontal ? std::clamp(x + i, 0, src.width() - 1) : x;
          const int sy = horizontal ? y : std::clamp(y + i, 0, src.height() - 1);
          acc += k[i + radius] * src.at(sx, sy, c);
        }
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

template <typename T>
double bilinear(const Raster<T>& img, double u, double v, int c = 0) {
  const int x0 = std::clamp(static_cast<int>(std::floor(u)), 0, img.width() - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(v)), 0, img.height() - 1);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = std::clamp(u - x0, 0.0, 1.0);
  const double fy = std::clamp(v - y0, 0.0, 1.0);
  const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
  const double bottom = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
  return (1.0 - fy) * top + fy * bottom;
}

}  // namespace detail

/// Resizes with a Gaussian anti-alias pre-filter (sigma = 0.5 * shrink factor per axis,
/// none when enlarging) followed by bilinear resampling of pixel centers.
template <typename T>
Raster<T> harmonize_resolution(const Raster<T>& image, int target_w, int target_h) {
  if (target_w <= 0 || target_h <= 0 || image.empty()) throw InvalidArgument("resize needs positive dimensions");
  if (image.width() == target_w && image.height() == target_h) return image;
  const double rx = static_cast<double>(image.width()) / target_w;
  const double ry = static_cast<double>(image.height()) / target_h;
  Raster<double> work = convert<double>(image);
  work = detail::blur_axis(work, rx > 1.0 ? 0.5 * rx : 0.0, true);
  work = detail::blur_axis(work, ry > 1.0 ? 0.5 * ry : 0.0, false);
  Raster<T> out(target_w, target_h, image.channels());
  for (int y = 0; y < target_h; ++y) {
    const double v = std::clamp((y + 0.5) * ry - 0.5, 0.0, image.height() - 1.0);
    for (int x = 0; x < target_w; ++x) {
      const double u = std::clamp((x + 0.5) * rx - 0.5, 0.0, image.width() - 1.0);
      for (int c = 0; c < image.channels(); ++c) out.at(x, y, c) = saturate_cast<T>(detail::bilinear(work, u, v, c));
    }
  }
  return out;
}

/// Where one RGB pixel lands in a secondary camera; `valid == false` marks a bad point.
struct MappedPixel {
  PixelCoord target = PixelCoord::Zero();
  WorldPoint world = WorldPoint::Zero();  // RGB camera frame
  bool valid = false;
};

struct PixelMapping {
  int width = 0;
  int height = 0;
  std::vector<MappedPixel> pixels;  // row-major over the RGB raster

  const MappedPixel& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](const auto& p) { return p.valid; }));
  }
};

/// Round-off allowance at the image border, in pixels.
inline constexpr double kBorderSlack = 1e-7;

/// True when bilinear sampling at p reads only pixels inside the image (up to round-off).
inline bool inside_for_sampling(const CameraIntrinsics& intr, const PixelCoord& p) {
  return p.x() >= -kBorderSlack && p.y() >= -kBorderSlack && p.x() <= intr.width - 1.0 + kBorderSlack &&
         p.y() <= intr.height - 1.0 + kBorderSlack;
}

/// Maps every RGB pixel into a secondary camera through its depth: undistort, back-project
/// with metric depth, move into the secondary frame, project with the secondary's distortion.
/// Missing depth, points behind the secondary camera and out-of-image projections are bad points.
inline PixelMapping build_mapping(const Image16& depth_mm, const CameraIntrinsics& intr_rgb,
                                  const CameraIntrinsics& intr_sec, const RigidPose& rgb_to_sec) {
  if (depth_mm.width() != intr_rgb.width || depth_mm.height() != intr_rgb.height || depth_mm.channels() != 1) {
    throw DimensionMismatch("depth raster does not match the RGB intrinsics");
  }
  PixelMapping map;
  map.width = intr_rgb.width;
  map.height = intr_rgb.height;
  map.pixels.resize(depth_mm.pixel_count());
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const std::uint16_t d = depth_mm.at(x, y);
      if (d == 0) continue;
      MappedPixel& m = map.pixels[static_cast<std::size_t>(y) * map.width + x];
      PixelCoord ideal;
      try {
        ideal = undistort_pixel({x, y}, intr_rgb);
      } catch (const NoConvergence&) {
        continue;
      }
      m.world = unproject(ideal, d * 1e-3, intr_rgb);
      const WorldPoint in_sec = transform(rgb_to_sec, m.world);
      if (!(in_sec.z() > 0.0)) continue;
      m.target = project(in_sec, intr_sec);
      m.valid = inside_for_sampling(intr_sec, m.target);
      if (m.valid) {
        m.target.x() = std::clamp(m.target.x(), 0.0, intr_sec.width - 1.0);
        m.target.y() = std::clamp(m.target.y(), 0.0, intr_sec.height - 1.0);
      }
    }
  }
  return map;
}

inline PixelMapping build_mapping(const Image16& depth_mm, const CameraIntrinsics& intr_rgb,
                                  const CameraIntrinsics& intr_sec, const RelativeExtrinsics& rel) {
  return build_mapping(depth_mm, intr_rgb, intr_sec, rel.pose);
}

template <typename T>
struct SampledRaster {
  Raster<T> image;     // RGB geometry
  Image8 bad_points;   // 1 where the mapping had no valid target
};

/// Bilinear gather of a secondary raster into RGB geometry; bad points read as 0.
template <typename T>
SampledRaster<T> sample_secondary(const Raster<T>& secondary, const PixelMapping& mapping) {
  SampledRaster<T> out{Raster<T>(mapping.width, mapping.height, secondary.channels()),
                       Image8(mapping.width, mapping.height)};
  for (int y = 0; y < mapping.height; ++y) {
    for (int x = 0; x < mapping.width; ++x) {
      const MappedPixel& m = mapping.at(x, y);
      if (!m.valid) {
        out.bad_points.at(x, y) = 1;
        continue;
      }
      for (int c = 0; c < secondary.channels(); ++c) {
        out.image.at(x, y, c) = saturate_cast<T>(detail::bilinear(secondary, m.target.x(), m.target.y(), c));
      }
    }
  }
  return out;
}

/// Thermal and UV resampled into the RGB frame.
struct AlignedFrame {
  Image8 rgb;
  Image16 thermal;
  Image8 uv;
  Image8 bad_points;  // 1 where depth is invalid or either projection left its image
};

/// Camera parameters the registration stage needs.
struct RegistrationModel {
  CameraIntrinsics rgb;
  CameraIntrinsics thermal;
  CameraIntrinsics uv;
  RigidPose rgb_to_thermal;
  RigidPose rgb_to_uv;

  static RegistrationModel from(const CalibrationResult& cal) {
    return {cal.camera(CameraId::rgb).intrinsics, cal.camera(CameraId::thermal).intrinsics,
            cal.camera(CameraId::uv).intrinsics, cal.extrinsic(CameraId::rgb, CameraId::thermal).pose,
            cal.extrinsic(CameraId::rgb, CameraId::uv).pose};
  }

  static RegistrationModel from(const RigConfig& rig) {
    return {rig.rgb.intrinsics, rig.thermal.intrinsics, rig.uv.intrinsics,
            rig_relative_pose(rig, CameraId::rgb, CameraId::thermal), rig_relative_pose(rig, CameraId::rgb, CameraId::uv)};
  }
};

inline AlignedFrame align_frame(const MultispectralFrame& frame, const RegistrationModel& model) {
  const auto check = [](int w, int h, const CameraIntrinsics& intr, const char* what) {
    if (w != intr.width || h != intr.height) {
      throw DimensionMismatch(std::string(what) + " raster does not match its calibration");
    }
  };
  check(frame.rgb.width(), frame.rgb.height(), model.rgb, "rgb");
  check(frame.thermal.width(), frame.thermal.height(), model.thermal, "thermal");
  check(frame.uv.width(), frame.uv.height(), model.uv, "uv");
  const auto thermal = sample_secondary(frame.thermal, build_mapping(frame.depth, model.rgb, model.thermal, model.rgb_to_thermal));
  const auto uv = sample_secondary(frame.uv, build_mapping(frame.depth, model.rgb, model.uv, model.rgb_to_uv));
  AlignedFrame out{frame.rgb, thermal.image, uv.image, Image8(model.rgb.width, model.rgb.height)};
  auto bad = out.bad_points.data();
  for (std::size_t i = 0; i < bad.size(); ++i) bad[i] = thermal.bad_points.data()[i] | uv.bad_points.data()[i];
  return out;
}

}  // namespace msv
