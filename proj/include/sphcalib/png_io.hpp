#pragma once

// PNG read/write through libpng. 8- and 16-bit, gray or RGB; alpha is
// dropped and palettes are expanded on read.

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "sphcalib/errors.hpp"
#include "sphcalib/warp.hpp"

namespace sphcalib {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return f;
}

}  // namespace detail

inline Image read_png(const std::filesystem::path& path) {
  auto file = detail::open_file(path, "rb");
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw Error(ErrorCode::kIo, path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kIo, "libpng initialisation failed");
  }
  Image img;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kIo, "corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // native little-endian uint16
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  buffer.resize(row_bytes * height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + row_bytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (channels != 1 && channels != 3) {
    throw Error(ErrorCode::kIo, "unsupported channel layout in " + path.string());
  }
  img = Image(width, height, channels);
  const std::size_t n = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) {
    float* dst = img.pixels.data() + img.index(0, y);
    if (out_depth == 16) {
      const auto* src = reinterpret_cast<const std::uint16_t*>(rows[y]);
      for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] / 65535.0f;
    } else {
      for (std::size_t i = 0; i < n; ++i) dst[i] = rows[y][i] / 255.0f;
    }
  }
  return img;
}

inline void write_png(const std::filesystem::path& path, const Image& img, int bit_depth = 8) {
  if (bit_depth != 8 && bit_depth != 16) throw Error(ErrorCode::kInvalidArgument, "bit depth must be 8 or 16");
  if (img.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot write an empty image");
  const std::size_t n = static_cast<std::size_t>(img.width) * img.channels;
  const std::size_t bytes_per = bit_depth / 8;
  const float scale = bit_depth == 16 ? 65535.0f : 255.0f;
  std::vector<png_byte> buffer(n * bytes_per * img.height);
  for (int y = 0; y < img.height; ++y) {
    const float* src = img.pixels.data() + img.index(0, y);
    png_byte* row = buffer.data() + n * bytes_per * y;
    for (std::size_t i = 0; i < n; ++i) {
      const float clamped = src[i] < 0.0f ? 0.0f : (src[i] > 1.0f ? 1.0f : src[i]);
      const auto q = static_cast<unsigned>(std::lround(clamped * scale));
      if (bit_depth == 16) {
        row[2 * i] = static_cast<png_byte>(q >> 8);  // PNG is big-endian
        row[2 * i + 1] = static_cast<png_byte>(q & 0xff);
      } else {
        row[i] = static_cast<png_byte>(q);
      }
    }
  }

  auto file = detail::open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIo, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIo, "failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, img.width, img.height, bit_depth,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) png_write_row(png, buffer.data() + n * bytes_per * y);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace sphcalib
