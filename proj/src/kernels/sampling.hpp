#pragma once

// Per-pixel sampling shared by the OpenMP and serial kernel variants, so the
// two differ only in how rows are scheduled.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "avr/image.hpp"
#include "avr/kernels.hpp"

namespace avr::kernels::detail {

inline constexpr double kEdgeEps = 1e-9;

inline std::uint16_t quantize(double v, std::uint16_t maxv) {
  const double r = std::round(v);
  if (!(r > 0.0)) return 0;
  if (r >= maxv) return maxv;
  return static_cast<std::uint16_t>(r);
}

/// Writes one destination pixel; returns false when the sample is outside.
inline bool bilinear_pixel(const ImageFrame& src, double sx, double sy, std::uint16_t* out,
                           int channels, std::uint16_t maxv) {
  const int w = src.width();
  const int h = src.height();
  if (!(sx >= -kEdgeEps && sy >= -kEdgeEps && sx <= (w - 1) + kEdgeEps &&
        sy <= (h - 1) + kEdgeEps)) {
    return false;
  }
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(sx);
  const int y0 = static_cast<int>(sy);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = sx - x0;
  const double fy = sy - y0;
  const double w00 = (1.0 - fx) * (1.0 - fy);
  const double w10 = fx * (1.0 - fy);
  const double w01 = (1.0 - fx) * fy;
  const double w11 = fx * fy;
  for (int c = 0; c < channels; ++c) {
    const double v = w00 * src.at(x0, y0, c) + w10 * src.at(x1, y0, c) +
                     w01 * src.at(x0, y1, c) + w11 * src.at(x1, y1, c);
    out[c] = quantize(v, maxv);
  }
  return true;
}

inline void warp_row(const ImageFrame& src, const Affine2D& m, ImageFrame& dst, int y, int x0,
                     int x1, Outside outside) {
  const int ch = dst.channels();
  const std::uint16_t maxv = dst.format().max_value();
  auto row = dst.row(y);
  for (int x = x0; x < x1; ++x) {
    const Point2 s = m.apply({static_cast<double>(x), static_cast<double>(y)});
    std::uint16_t* px = row.data() + static_cast<std::size_t>(x) * ch;
    if (!bilinear_pixel(src, s.x, s.y, px, ch, maxv) && outside == Outside::fill_black) {
      std::fill(px, px + ch, std::uint16_t{0});
    }
  }
}

inline void bicubic_row(const ImageFrame& src, ImageFrame& dst, int r, int y) {
  const int ch = src.channels();
  const int w = src.width();
  const int h = src.height();
  const std::uint16_t maxv = dst.format().max_value();
  const double sy = (y + 0.5) / r - 0.5;
  const int iy = static_cast<int>(std::floor(sy));
  const auto wy = catmull_rom_weights(sy - iy);
  auto row = dst.row(y);
  for (int x = 0; x < dst.width(); ++x) {
    const double sx = (x + 0.5) / r - 0.5;
    const int ix = static_cast<int>(std::floor(sx));
    const auto wx = catmull_rom_weights(sx - ix);
    for (int c = 0; c < ch; ++c) {
      double acc = 0.0;
      for (int j = 0; j < 4; ++j) {
        const int yy = std::clamp(iy - 1 + j, 0, h - 1);
        double racc = 0.0;
        for (int i = 0; i < 4; ++i) {
          const int xx = std::clamp(ix - 1 + i, 0, w - 1);
          racc += wx[i] * src.at(xx, yy, c);
        }
        acc += wy[j] * racc;
      }
      row[static_cast<std::size_t>(x) * ch + c] = quantize(acc, maxv);
    }
  }
}

inline void check_warp_args(const ImageFrame& src, const ImageFrame& dst) {
  if (src.channels() != dst.channels()) throw DomainError("warp: channel count mismatch");
}

}  // namespace avr::kernels::detail
