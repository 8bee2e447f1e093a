#pragma once

// Inverse-mapping image resampler.
//
// Two coordinate conventions meet here:
//   * bilinear_sample() takes index coordinates: pixel (i, j) sits at (i, j).
//   * remap() hands its InverseMap continuous coordinates in which pixel
//     (i, j) covers [i, i+1) x [j, j+1), so its center is (i + 0.5, j + 0.5).
//     The map returns a source position in the same continuous frame.
// With this split an identity map reproduces the input exactly, and all map
// constructors (crop rendering, undistortion, resizing) can reason in
// continuous pixel units where the principal point is simply (W/2, H/2).

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sphcalib/errors.hpp"
#include "sphcalib/parallel.hpp"

namespace sphcalib {

/// Row-major interleaved image with samples in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f) : width(w), height(h), channels(c) {
    if (w <= 0 || h <= 0) throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
    if (c != 1 && c != 3) throw Error(ErrorCode::kInvalidArgument, "images have 1 or 3 channels");
    pixels.assign(static_cast<std::size_t>(w) * h * c, fill);
  }

  bool empty() const { return pixels.empty(); }

  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width + x) * channels;
  }
  float& at(int x, int y, int c = 0) { return pixels[index(x, y) + c]; }
  float at(int x, int y, int c = 0) const { return pixels[index(x, y) + c]; }

  std::span<float> row(int y) {
    return {pixels.data() + index(0, y), static_cast<std::size_t>(width) * channels};
  }
};

enum class BorderMode {
  kClamp,
  /// Wraps x (longitude of an equirectangular source), clamps y.
  kWrapHorizontal,
};

using SourcePoint = Eigen::Vector2d;

/// target pixel center (continuous coordinates) -> source position, or
/// nullopt when the target pixel has no source.
using InverseMap = std::function<std::optional<SourcePoint>(double, double)>;

namespace detail {

inline int wrap_index(int i, int n) {
  const int m = i % n;
  return m < 0 ? m + n : m;
}

}  // namespace detail

/// Bilinear interpolation at index coordinates (x, y). Writes `channels`
/// values into out.
inline void bilinear_sample(const Image& src, double x, double y, BorderMode border,
                            std::span<float> out) {
  // Bring coordinates into a range where the integer casts below are safe.
  if (border == BorderMode::kWrapHorizontal) {
    x -= src.width * std::floor(x / src.width);
  } else {
    x = std::clamp(x, -1.0, static_cast<double>(src.width));
  }
  y = std::clamp(y, -1.0, static_cast<double>(src.height));
  const double fx = std::floor(x), fy = std::floor(y);
  const double ax = x - fx, ay = y - fy;
  int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  int x1 = x0 + 1, y1 = y0 + 1;
  if (border == BorderMode::kWrapHorizontal) {
    x0 = detail::wrap_index(x0, src.width);
    x1 = detail::wrap_index(x1, src.width);
  } else {
    x0 = std::clamp(x0, 0, src.width - 1);
    x1 = std::clamp(x1, 0, src.width - 1);
  }
  y0 = std::clamp(y0, 0, src.height - 1);
  y1 = std::clamp(y1, 0, src.height - 1);

  const float* p00 = src.pixels.data() + src.index(x0, y0);
  const float* p10 = src.pixels.data() + src.index(x1, y0);
  const float* p01 = src.pixels.data() + src.index(x0, y1);
  const float* p11 = src.pixels.data() + src.index(x1, y1);
  const double w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay);
  const double w01 = (1 - ax) * ay, w11 = ax * ay;
  for (int c = 0; c < src.channels; ++c) {
    out[c] = static_cast<float>(w00 * p00[c] + w10 * p10[c] + w01 * p01[c] + w11 * p11[c]);
  }
}

inline std::array<float, 3> bilinear_sample(const Image& src, double x, double y,
                                            BorderMode border = BorderMode::kClamp) {
  std::array<float, 3> v{};
  bilinear_sample(src, x, y, border, std::span<float>(v.data(), static_cast<std::size_t>(src.channels)));
  return v;
}

template <typename Map>
concept InverseMapping = requires(const Map& m, double u, double v) {
  { m(u, v) } -> std::convertible_to<std::optional<SourcePoint>>;
};

/// Remaps rows [row_begin, row_end) of `dst`. Building block of remap(); also
/// what the tile-partition tests exercise.
template <InverseMapping Map>
void remap_rows(const Image& src, Image& dst, const Map& map, BorderMode border, int row_begin,
                int row_end) {
  for (int v = row_begin; v < row_end; ++v) {
    for (int u = 0; u < dst.width; ++u) {
      std::span<float> out(dst.pixels.data() + dst.index(u, v), static_cast<std::size_t>(dst.channels));
      const auto s = map(u + 0.5, v + 0.5);
      if (!s || !std::isfinite(s->x()) || !std::isfinite(s->y())) {
        std::fill(out.begin(), out.end(), 0.0f);
        continue;
      }
      bilinear_sample(src, s->x() - 0.5, s->y() - 0.5, border, out);
    }
  }
}

/// Renders a target image by pulling every target pixel from the source
/// through `map`. Row bands are processed in parallel; each output pixel
/// depends only on its own coordinates, so results are schedule independent.
template <InverseMapping Map>
Image remap(const Image& src, int target_width, int target_height, const Map& map,
            BorderMode border = BorderMode::kClamp, int threads = 0) {
  if (src.empty()) throw Error(ErrorCode::kInvalidArgument, "empty source image");
  Image dst(target_width, target_height, src.channels);
  parallel_for_chunks(static_cast<std::size_t>(target_height), resolve_threads(threads),
                      [&](std::size_t begin, std::size_t end) {
                        remap_rows(src, dst, map, border, static_cast<int>(begin), static_cast<int>(end));
                      });
  return dst;
}

/// Plain bilinear resize (no prefiltering), possibly anisotropic.
inline Image resize(const Image& src, int target_width, int target_height, int threads = 0) {
  const double sx = static_cast<double>(src.width) / target_width;
  const double sy = static_cast<double>(src.height) / target_height;
  return remap(
      src, target_width, target_height,
      [sx, sy](double u, double v) -> std::optional<SourcePoint> { return SourcePoint(u * sx, v * sy); },
      BorderMode::kClamp, threads);
}

}  // namespace sphcalib
