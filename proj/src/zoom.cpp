#include "avr/zoom.hpp"

#include <algorithm>
#include <cmath>

#include "avr/errors.hpp"
#include "avr/kernels.hpp"

namespace avr {

void ZoomParams::validate() const {
  if (!(s_max >= 1.0) || !std::isfinite(s_max)) throw DomainError("s_max must be >= 1");
  if (!(alpha >= 1.0) || !std::isfinite(alpha)) throw DomainError("alpha must be >= 1");
}

ScaleResult compute_scale_factor(const BoundingBox& target, FrameSize f, const ZoomParams& zp) {
  zp.validate();
  const double w = target.width();
  const double h = target.height();
  if (!(w > 0.0) || !(h > 0.0)) return {1.0, true};
  const double fit = std::min(f.width / (zp.alpha * w), f.height / (zp.alpha * h));
  return {std::clamp(fit, 1.0, zp.s_max), false};
}

ImageFrame crop_and_fill(const ImageFrame& frame, const Affine2D& t, FrameSize f) {
  if (!f.valid()) throw DomainError("output frame size must be at least 2x2");
  const Affine2D inv = t.inverse();
  ImageFrame out(f.width, f.height, frame.channels(), frame.format());
  kernels::warp_bilinear(frame, inv, out, kernels::Rect::full(f), kernels::Outside::fill_black);
  return out;
}

ImageFrame bicubic_upscale(const ImageFrame& p, int r) { return kernels::bicubic_upscale(p, r); }

}  // namespace avr
