#pragma once

// Data-parallel raster kernels. Each kernel has an OpenMP version in
// avr::kernels and a plain serial version in avr::kernels::serial; both are
// required to produce bit-identical output.

#include "avr/geometry.hpp"
#include "avr/image.hpp"

namespace avr::kernels {

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Rect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  static Rect full(FrameSize f) { return {0, 0, f.width, f.height}; }
  Rect intersect(const Rect& o) const;
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

enum class Outside {
  fill_black,  // samples outside the source become 0
  keep,        // leave the destination pixel untouched
};

/// For every destination pixel p inside `region`, samples `src` at
/// `dst_to_src(p)` with bilinear interpolation. Sample points sit on the
/// integer grid; a point is inside when it lies in [0, W-1] x [0, H-1].
/// Results are rounded and clamped to the destination's bit depth.
void warp_bilinear(const ImageFrame& src, const Affine2D& dst_to_src, ImageFrame& dst,
                   Rect region, Outside outside);

/// Catmull-Rom upscale by an integer factor r >= 1 with clamped borders.
/// Output pixel X samples the source at (X + 0.5) / r - 0.5.
ImageFrame bicubic_upscale(const ImageFrame& src, int r);

namespace serial {

void warp_bilinear(const ImageFrame& src, const Affine2D& dst_to_src, ImageFrame& dst,
                   Rect region, Outside outside);
ImageFrame bicubic_upscale(const ImageFrame& src, int r);

}  // namespace serial

/// Catmull-Rom (a = -0.5) weights for the four taps around a sample with
/// fractional offset t in [0, 1).
std::array<double, 4> catmull_rom_weights(double t);

}  // namespace avr::kernels
