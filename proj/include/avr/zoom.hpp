#pragma once

#include "avr/geometry.hpp"
#include "avr/image.hpp"

namespace avr {

struct ZoomParams {
  double s_max = 7.0;  // largest allowed scale
  double alpha = 1.2;  // ROI padding factor, >= 1

  void validate() const;
};

struct ScaleResult {
  double s = 1.0;
  bool degenerate = false;  // zero-width or zero-height target
};

/// s = clamp(min(W / (alpha w), H / (alpha h)), 1, s_max): the largest zoom
/// that keeps the alpha-padded target inside the frame.
ScaleResult compute_scale_factor(const BoundingBox& target, FrameSize f, const ZoomParams& zp);

/// Resamples `frame` through `t` into an f-sized frame with the source's
/// pixel format. Output pixel p takes the bilinear sample at t^-1(p); samples
/// falling off the source are black. Throws DomainError for singular t.
ImageFrame crop_and_fill(const ImageFrame& frame, const Affine2D& t, FrameSize f);

/// Catmull-Rom r-times upscale (fallback when no SR network is configured).
ImageFrame bicubic_upscale(const ImageFrame& p, int r);

}  // namespace avr
