#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "msv/camera_model.hpp"
#include "msv/errors.hpp"
#include "msv/raster.hpp"

namespace msv {

/// 3x3 Laplacian high-pass added back onto the image: out = in + alpha * (in * L),
/// L = [0,-1,0; -1,4,-1; 0,-1,0], replicated border, saturated for integer rasters.
template <typename T>
Raster<T> laplacian_sharpen(const Raster<T>& image, double alpha = 1.0) {
  if (image.channels() != 1) throw InvalidArgument("laplacian_sharpen expects a single-channel raster");
  Raster<T> out(image.width(), image.height());
  const int w = image.width();
  const int h = image.height();
  const auto px = [&](int x, int y) { return static_cast<double>(image.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1))); };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double c = px(x, y);
      const double response = 4.0 * c - px(x - 1, y) - px(x + 1, y) - px(x, y - 1) - px(x, y + 1);
      out.at(x, y) = saturate_cast<T>(c + alpha * response);
    }
  }
  return out;
}

struct ThresholdSpec {
  enum class Kind { absolute, percentile };
  Kind kind = Kind::percentile;
  double value = 95.0;

  static ThresholdSpec absolute(double v) { return {Kind::absolute, v}; }
  static ThresholdSpec percentile(double p) { return {Kind::percentile, p}; }

  void validate() const {
    if (!std::isfinite(value)) throw InvalidArgument("threshold must be finite");
    if (kind == Kind::percentile && (value < 0.0 || value > 100.0)) {
      throw InvalidArgument("percentile must lie in [0, 100]");
    }
  }
};

/// Parses "95%" / "p95" as a percentile and a bare number as an absolute threshold.
inline ThresholdSpec parse_threshold(std::string text) {
  std::erase_if(text, [](unsigned char ch) { return std::isspace(ch); });
  ThresholdSpec spec;
  try {
    std::size_t used = 0;
    if (!text.empty() && text.back() == '%') {
      spec = ThresholdSpec::percentile(std::stod(text.substr(0, text.size() - 1), &used));
      used += 1;
    } else if (!text.empty() && (text.front() == 'p' || text.front() == 'P')) {
      spec = ThresholdSpec::percentile(std::stod(text.substr(1), &used));
      used += 1;
    } else {
      spec = ThresholdSpec::absolute(std::stod(text, &used));
    }
    if (used != text.size()) throw InvalidArgument("trailing characters");
  } catch (const std::logic_error&) {
    throw InvalidArgument("cannot parse threshold '" + text + "'");
  }
  spec.validate();
  return spec;
}

/// Absolute thresholds pass through; percentiles use the nearest-rank definition
/// (value at rank ceil(p/100 * N), rank 1 for p = 0) over pixels not flagged in `bad`.
template <typename T>
double resolve_threshold(const Raster<T>& raster, const ThresholdSpec& spec, const Image8* bad = nullptr) {
  spec.validate();
  if (raster.empty()) throw InvalidArgument("threshold of an empty raster");
  if (spec.kind == ThresholdSpec::Kind::absolute) return spec.value;
  if (bad && (bad->width() != raster.width() || bad->height() != raster.height())) {
    throw DimensionMismatch("bad-point mask does not match raster");
  }
  std::vector<double> values;
  values.reserve(raster.pixel_count());
  for (int y = 0; y < raster.height(); ++y) {
    for (int x = 0; x < raster.width(); ++x) {
      if (bad && bad->at(x, y)) continue;
      values.push_back(static_cast<double>(raster.at(x, y)));
    }
  }
  if (values.empty()) throw AllBadPoints("every pixel is a bad point");
  const auto n = values.size();
  const auto rank = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(spec.value / 100.0 * n - 1e-9)));
  const auto k = std::min(rank, n) - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

using Rgb8 = std::array<std::uint8_t, 3>;

/// Linear ramp between two colours at t in [0, 1].
struct ColorRamp {
  Eigen::Vector3d from;
  Eigen::Vector3d to;

  Rgb8 operator()(double t) const {
    t = std::clamp(t, 0.0, 1.0);
    const Eigen::Vector3d c = from + t * (to - from);
    return {saturate_cast<std::uint8_t>(c.x()), saturate_cast<std::uint8_t>(c.y()), saturate_cast<std::uint8_t>(c.z())};
  }
};

/// Red to yellow for hot areas.
inline const ColorRamp warm_ramp{{128, 0, 0}, {255, 255, 0}};
/// Blue to purple for UV-bright areas.
inline const ColorRamp cool_ramp{{0, 0, 128}, {200, 0, 255}};

enum class Precedence { thermal_over_uv, uv_over_thermal };

inline std::string to_string(Precedence p) { return p == Precedence::thermal_over_uv ? "thermal_over_uv" : "uv_over_thermal"; }

inline Precedence parse_precedence(const std::string& s) {
  if (s == "thermal_over_uv" || s == "thermal") return Precedence::thermal_over_uv;
  if (s == "uv_over_thermal" || s == "uv") return Precedence::uv_over_thermal;
  throw InvalidArgument("unknown precedence '" + s + "'");
}

struct FusionConfig {
  ThresholdSpec thermal = ThresholdSpec::percentile(95.0);
  ThresholdSpec uv = ThresholdSpec::percentile(95.0);
  Precedence precedence = Precedence::thermal_over_uv;
  double sharpen_alpha = 0.0;  // Laplacian sharpening of UV before thresholding; 0 disables
};

enum class PixelLabel : std::uint8_t { rgb = 0, thermal = 1, uv = 2 };

struct FusedImage {
  Image8 rgb;
  Image8 labels;  // PixelLabel per pixel
  double thermal_threshold = 0.0;
  double uv_threshold = 0.0;

  PixelLabel label(int x, int y) const { return static_cast<PixelLabel>(labels.at(x, y)); }
};

/// Keeps RGB where both channels are at or below their thresholds and at every bad point;
/// elsewhere paints the exceeding channel through its ramp (t = intensity / full scale).
template <typename TT, typename TU>
FusedImage highlight(const Image8& rgb, const Raster<TT>& thermal, const Raster<TU>& uv, const Image8& bad,
                     const FusionConfig& cfg = {}) {
  if (rgb.channels() != 3) throw InvalidArgument("highlight expects an RGB raster");
  const auto same = [&](int w, int h) { return w == rgb.width() && h == rgb.height(); };
  if (!same(thermal.width(), thermal.height()) || !same(uv.width(), uv.height()) || !same(bad.width(), bad.height()) ||
      thermal.channels() != 1 || uv.channels() != 1) {
    throw DimensionMismatch("fusion inputs must share the RGB geometry");
  }
  const Raster<TU> uv_used = cfg.sharpen_alpha != 0.0 ? laplacian_sharpen(uv, cfg.sharpen_alpha) : uv;
  FusedImage out{rgb, Image8(rgb.width(), rgb.height()), resolve_threshold(thermal, cfg.thermal, &bad),
                 resolve_threshold(uv_used, cfg.uv, &bad)};
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      if (bad.at(x, y)) continue;
      const double t = thermal.at(x, y);
      const double u = uv_used.at(x, y);
      const bool hot = t > out.thermal_threshold;
      const bool bright = u > out.uv_threshold;
      if (!hot && !bright) continue;
      const bool use_thermal = hot && (!bright || cfg.precedence == Precedence::thermal_over_uv);
      const Rgb8 c = use_thermal ? warm_ramp(t / intensity_max<TT>()) : cool_ramp(u / intensity_max<TU>());
      for (int k = 0; k < 3; ++k) out.rgb.at(x, y, k) = c[k];
      out.labels.at(x, y) = static_cast<std::uint8_t>(use_thermal ? PixelLabel::thermal : PixelLabel::uv);
    }
  }
  return out;
}

struct CloudPoint {
  Eigen::Vector3d position;  // metres, RGB camera frame
  Rgb8 color{};
  std::uint16_t thermal = 0;
  std::uint16_t uv = 0;
  int u = 0;
  int v = 0;
};

struct MultispectralPointCloud {
  std::vector<CloudPoint> points;
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// One point per valid-depth pixel in row-major order: undistort, back-project with metric depth.
template <typename TT, typename TU>
MultispectralPointCloud build_point_cloud(const Image16& depth_mm, const Image8& fused_rgb, const Raster<TT>& thermal,
                                          const Raster<TU>& uv, const CameraIntrinsics& intr_rgb) {
  const int w = depth_mm.width();
  const int h = depth_mm.height();
  const auto same = [&](int ww, int hh) { return ww == w && hh == h; };
  if (!same(intr_rgb.width, intr_rgb.height) || !same(fused_rgb.width(), fused_rgb.height()) ||
      !same(thermal.width(), thermal.height()) || !same(uv.width(), uv.height()) || fused_rgb.channels() != 3) {
    throw DimensionMismatch("point cloud inputs must share the RGB geometry");
  }
  MultispectralPointCloud cloud;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint16_t d = depth_mm.at(x, y);
      if (d == 0) continue;
      PixelCoord ideal;
      try {
        ideal = undistort_pixel({x, y}, intr_rgb);
      } catch (const NoConvergence&) {
        continue;
      }
      CloudPoint p;
      p.position = unproject(ideal, d * 1e-3, intr_rgb);
      p.color = {fused_rgb.at(x, y, 0), fused_rgb.at(x, y, 1), fused_rgb.at(x, y, 2)};
      p.thermal = saturate_cast<std::uint16_t>(static_cast<double>(thermal.at(x, y)));
      p.uv = saturate_cast<std::uint16_t>(static_cast<double>(uv.at(x, y)));
      p.u = x;
      p.v = y;
      cloud.points.push_back(p);
    }
  }
  return cloud;
}

}  // namespace msv
