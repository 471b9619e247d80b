#pragma once

#include <png.h>

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "msv/errors.hpp"
#include "msv/raster.hpp"

namespace msv::io {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

[[noreturn]] inline void png_fail(png_structp png, png_const_charp msg) {
  *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
  png_longjmp(png, 1);
}

inline void png_warn(png_structp, png_const_charp) {}

}  // namespace detail

/// Writes an 8-bit gray or RGB PNG (1 or 3 channels).
inline void write_png(const std::filesystem::path& path, const Image8& img) {
  if (img.channels() != 1 && img.channels() != 3) throw InvalidArgument("PNG output needs 1 or 3 channels");
  auto file = detail::open_file(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, detail::png_fail, detail::png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed for " + path.string());
  }
  std::vector<png_bytep> rows(img.height());
  auto data = const_cast<std::uint8_t*>(img.data().data());
  for (int y = 0; y < img.height(); ++y) rows[y] = data + static_cast<std::size_t>(y) * img.width() * img.channels();
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed for " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width(), img.height(), 8, img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Reads a PNG as 8-bit RGB (gray and palette images are expanded, alpha dropped, 16-bit stripped).
inline Image8 read_png_rgb(const std::filesystem::path& path) {
  auto file = detail::open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError("not a PNG file: " + path.string());
  }
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, detail::png_fail, detail::png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed for " + path.string());
  }
  Image8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  if (png_get_channels(png, info) != 3) png_error(png, "unexpected channel layout");
  img = Image8(w, h, 3);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = img.data().data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

/// Binary PGM (P5): maxval 255 for 8-bit, 65535 for 16-bit with big-endian samples.
template <typename T>
void write_pgm(const std::filesystem::path& path, const Raster<T>& img) {
  static_assert(std::is_same_v<T, std::uint8_t> || std::is_same_v<T, std::uint16_t>);
  if (img.channels() != 1) throw InvalidArgument("PGM output needs a single channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << '\n' << static_cast<unsigned>(intensity_max<T>()) << '\n';
  if constexpr (sizeof(T) == 1) {
    out.write(reinterpret_cast<const char*>(img.data().data()), static_cast<std::streamsize>(img.data().size()));
  } else {
    std::vector<char> bytes(img.data().size() * 2);
    for (std::size_t i = 0; i < img.data().size(); ++i) {
      bytes[2 * i] = static_cast<char>(img.data()[i] >> 8);
      bytes[2 * i + 1] = static_cast<char>(img.data()[i] & 0xff);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

namespace detail {

/// Next header token, skipping whitespace and '#' comments.
inline std::string pgm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {}
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace detail

/// Reads a P5 PGM whose maxval fits T (255 for 8-bit, up to 65535 for 16-bit).
template <typename T>
Raster<T> read_pgm(const std::filesystem::path& path) {
  static_assert(std::is_same_v<T, std::uint8_t> || std::is_same_v<T, std::uint16_t>);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto corrupt = [&](const std::string& why) { return IoError("corrupt PGM " + path.string() + ": " + why); };
  if (detail::pgm_token(in) != "P5") throw corrupt("missing P5 magic");
  int w = 0, h = 0;
  long maxval = 0;
  try {
    w = std::stoi(detail::pgm_token(in));
    h = std::stoi(detail::pgm_token(in));
    maxval = std::stol(detail::pgm_token(in));
  } catch (const std::logic_error&) {
    throw corrupt("bad header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw corrupt("bad header values");
  const bool wide = maxval > 255;
  if (wide != (sizeof(T) == 2)) throw corrupt(wide ? "expected 8-bit samples" : "expected 16-bit samples");
  Raster<T> img(w, h);
  const std::size_t n = img.data().size() * sizeof(T);
  std::vector<unsigned char> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw corrupt("truncated pixel data");
  auto dst = img.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = sizeof(T) == 1 ? bytes[i] : static_cast<T>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  }
  return img;
}

}  // namespace msv::io
