#include <algorithm>

#include "avr/errors.hpp"
#include "avr/kernels.hpp"
#include "sampling.hpp"

namespace avr::kernels {

Rect Rect::intersect(const Rect& o) const {
  return {std::max(x0, o.x0), std::max(y0, o.y0), std::min(x1, o.x1), std::min(y1, o.y1)};
}

void warp_bilinear(const ImageFrame& src, const Affine2D& dst_to_src, ImageFrame& dst,
                   Rect region, Outside outside) {
  detail::check_warp_args(src, dst);
  const Rect r = region.intersect(Rect::full(dst.size()));
  if (r.empty()) return;
#pragma omp parallel for schedule(static)
  for (int y = r.y0; y < r.y1; ++y) {
    detail::warp_row(src, dst_to_src, dst, y, r.x0, r.x1, outside);
  }
}

ImageFrame bicubic_upscale(const ImageFrame& src, int r) {
  if (r < 1) throw DomainError("upscale factor must be >= 1");
  if (r == 1) return src;
  ImageFrame dst(src.width() * r, src.height() * r, src.channels(), src.format());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < dst.height(); ++y) {
    detail::bicubic_row(src, dst, r, y);
  }
  return dst;
}

std::array<double, 4> catmull_rom_weights(double t) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  return {0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
          0.5 * (-3.0 * t3 + 4.0 * t2 + t), 0.5 * (t3 - t2)};
}

namespace serial {

void warp_bilinear(const ImageFrame& src, const Affine2D& dst_to_src, ImageFrame& dst,
                   Rect region, Outside outside) {
  detail::check_warp_args(src, dst);
  const Rect r = region.intersect(Rect::full(dst.size()));
  for (int y = r.y0; y < r.y1; ++y) {
    detail::warp_row(src, dst_to_src, dst, y, r.x0, r.x1, outside);
  }
}

ImageFrame bicubic_upscale(const ImageFrame& src, int r) {
  if (r < 1) throw DomainError("upscale factor must be >= 1");
  if (r == 1) return src;
  ImageFrame dst(src.width() * r, src.height() * r, src.channels(), src.format());
  for (int y = 0; y < dst.height(); ++y) {
    detail::bicubic_row(src, dst, r, y);
  }
  return dst;
}

}  // namespace serial

}  // namespace avr::kernels
