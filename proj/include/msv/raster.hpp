#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <type_traits>
#include <vector>

#include "msv/errors.hpp"

namespace msv {

/// Row-major interleaved image buffer.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels <= 0) {
      throw InvalidArgument("raster dimensions must be non-negative");
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  bool empty() const { return data_.empty(); }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  bool same_shape(const Raster& o) const {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

using GrayImage = Raster<double>;
using Image8 = Raster<std::uint8_t>;
using Image16 = Raster<std::uint16_t>;

/// Converts a double to T, rounding and saturating for integer types.
template <typename T>
T saturate_cast(double v) {
  if constexpr (std::is_integral_v<T>) {
    if (!(v > static_cast<double>(std::numeric_limits<T>::lowest()))) return std::numeric_limits<T>::lowest();
    if (v >= static_cast<double>(std::numeric_limits<T>::max())) return std::numeric_limits<T>::max();
    return static_cast<T>(std::lround(v));
  } else {
    return static_cast<T>(v);
  }
}

/// Largest representable intensity for integer rasters, 1 for floating point.
template <typename T>
constexpr double intensity_max() {
  if constexpr (std::is_integral_v<T>) {
    return static_cast<double>(std::numeric_limits<T>::max());
  } else {
    return 1.0;
  }
}

template <typename To, typename From>
Raster<To> convert(const Raster<From>& src, double scale = 1.0) {
  Raster<To> out(src.width(), src.height(), src.channels());
  auto in = src.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    dst[i] = saturate_cast<To>(static_cast<double>(in[i]) * scale);
  }
  return out;
}

/// Luma of an interleaved RGB raster (BT.601 weights).
template <typename T>
GrayImage to_gray(const Raster<T>& rgb) {
  if (rgb.channels() == 1) return convert<double>(rgb);
  GrayImage out(rgb.width(), rgb.height());
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      out.at(x, y) = 0.299 * rgb.at(x, y, 0) + 0.587 * rgb.at(x, y, 1) + 0.114 * rgb.at(x, y, 2);
    }
  }
  return out;
}

}  // namespace msv
