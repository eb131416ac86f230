#include <doctest.h>

#include <cmath>
#include <random>

#include "avr/errors.hpp"
#include "avr/zoom.hpp"
#include "test_util.hpp"

using namespace avr;

TEST_CASE("scale factor examples") {
  const ZoomParams zp;
  CHECK(compute_scale_factor({0, 0, 100, 50}, {640, 480}, zp).s ==
        doctest::Approx(640.0 / 120.0).epsilon(1e-15));
  CHECK(compute_scale_factor({0, 0, 640, 480}, {640, 480}, zp).s == 1.0);
  CHECK(compute_scale_factor({0, 0, 64, 48}, {640, 480}, ZoomParams{7.0, 1.0}).s == 7.0);

  const ScaleResult deg = compute_scale_factor({5, 5, 5, 20}, {640, 480}, zp);
  CHECK(deg.degenerate);
  CHECK(deg.s == 1.0);
  CHECK_FALSE(compute_scale_factor({0, 0, 1, 1}, {640, 480}, zp).degenerate);
}

TEST_CASE("zoom params validation") {
  CHECK_THROWS_AS((ZoomParams{0.5, 1.2}.validate()), DomainError);
  CHECK_THROWS_AS((ZoomParams{7, 0.9}.validate()), DomainError);
  CHECK_THROWS_AS((ZoomParams{NAN, 1.2}.validate()), DomainError);
  CHECK_NOTHROW((ZoomParams{1, 1}.validate()));
}

TEST_CASE("scale law on random boxes") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 5000; ++i) {
    const FrameSize f{2 + static_cast<int>(rng() % 2000), 2 + static_cast<int>(rng() % 2000)};
    const ZoomParams zp{1 + 9 * u(rng), 1 + 2 * u(rng)};
    const double w = 1e-3 + u(rng) * f.width, h = 1e-3 + u(rng) * f.height;
    const double x0 = u(rng) * (f.width - w), y0 = u(rng) * (f.height - h);
    const ScaleResult r = compute_scale_factor({x0, y0, x0 + w, y0 + h}, f, zp);
    CHECK(r.s >= 1.0);
    CHECK(r.s <= zp.s_max);
    if (r.s > 1.0) {
      CHECK(r.s * zp.alpha * w <= f.width * (1 + 1e-12));
      CHECK(r.s * zp.alpha * h <= f.height * (1 + 1e-12));
    }
    if (r.s > 1.0 && r.s < zp.s_max) {
      // Tight in at least one dimension.
      const bool tight = std::abs(r.s * zp.alpha * w - f.width) < 1e-9 * f.width ||
                         std::abs(r.s * zp.alpha * h - f.height) < 1e-9 * f.height;
      CHECK(tight);
    }
  }
}

TEST_CASE("crop_and_fill: identity reproduces the input") {
  std::mt19937_64 rng(1);
  FormatSpec fmt;
  fmt.bit_depth = 16;
  fmt.metadata = {{"k", "v"}};
  const ImageFrame f = test::random_frame(rng, 33, 21, 3, fmt);
  const ImageFrame out = crop_and_fill(f, Affine2D::identity(), f.size());
  CHECK(out == f);
}

TEST_CASE("crop_and_fill: translation leaves a black band where the support moved away") {
  ImageFrame f(40, 10, 3);
  f.fill(200);
  // Output p samples p - 10: columns 0..9 have no source.
  const ImageFrame plus = crop_and_fill(f, Affine2D::translation(10, 0), f.size());
  const ImageFrame minus = crop_and_fill(f, Affine2D::translation(-10, 0), f.size());
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 40; ++x) {
      CHECK(plus.at(x, y, 0) == (x < 10 ? 0 : 200));
      CHECK(minus.at(x, y, 1) == (x >= 30 ? 0 : 200));
    }
  }
}

TEST_CASE("crop_and_fill: s=2 keeps the centre checker, matching direct inverse sampling") {
  const FrameSize fs{64, 48};
  ImageFrame f(fs.width, fs.height, 3);
  f.fill(50);
  const int cx = 32, cy = 24;
  const std::array<std::array<std::uint16_t, 3>, 4> colors{
      {{255, 0, 0}, {0, 255, 0}, {0, 0, 255}, {255, 255, 0}}};
  int k = 0;
  for (int y : {cy - 1, cy})
    for (int x : {cx - 1, cx}) {
      for (int c = 0; c < 3; ++c) f.at(x, y, c) = colors[k][c];
      ++k;
    }
  const Affine2D t = zoom_transform(2, fs);
  const ImageFrame out = crop_and_fill(f, t, fs);
  const Affine2D inv = t.inverse();
  for (int y : {cy - 1, cy}) {
    for (int x : {cx - 1, cx}) {
      const Point2 s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      const int x0 = static_cast<int>(std::floor(s.x)), y0 = static_cast<int>(std::floor(s.y));
      const double fx = s.x - x0, fy = s.y - y0;
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - fx) * (1 - fy) * f.at(x0, y0, c) + fx * (1 - fy) * f.at(x0 + 1, y0, c) +
                         (1 - fx) * fy * f.at(x0, y0 + 1, c) + fx * fy * f.at(x0 + 1, y0 + 1, c);
        CHECK(out.at(x, y, c) == static_cast<std::uint16_t>(std::round(v)));
      }
    }
  }
  for (int c = 0; c < 3; ++c) CHECK(out.at(cx, cy, c) == f.at(cx, cy, c));
}

TEST_CASE("crop_and_fill: output size and format follow the request; singular rejected") {
  std::mt19937_64 rng(2);
  FormatSpec fmt;
  fmt.color_space = ColorSpace::linear_rgb;
  const ImageFrame f = test::random_frame(rng, 30, 20, 3, fmt);
  const ImageFrame out = crop_and_fill(f, zoom_transform(1.7, f.size()), {30, 20});
  CHECK(out.size() == f.size());
  CHECK(out.format() == f.format());
  CHECK(crop_and_fill(f, zoom_transform(1.7, f.size()), {30, 20}) == out);
  CHECK_THROWS_AS(crop_and_fill(f, Affine2D::from_rows(0, 0, 0, 0, 1, 0), {30, 20}), DomainError);
}
