#include <doctest.h>

#include <cmath>
#include <random>

#include "avr/detection.hpp"
#include "avr/errors.hpp"
#include "avr/virtual_camera.hpp"
#include "test_util.hpp"

using namespace avr;

namespace {

CameraState pose(double pan, double tilt, double zoom = 1.0) {
  CameraState s;
  s.pan = pan;
  s.tilt = tilt;
  s.zoom = zoom;
  s.focal_mm = focal_from_zoom(zoom);
  return s;
}

std::optional<Detection> find(const ImageFrame& f, const std::string& label) {
  return select_target(detect_blobs(f, DetectorConfig::palette()), label);
}

bool reachable(const PanTilt& pt) {
  return pt.pan >= -kPanLimitDeg && pt.pan <= kPanLimitDeg && pt.tilt >= kTiltMinDeg &&
         pt.tilt <= kTiltMaxDeg;
}

}  // namespace

TEST_CASE("scenes are deterministic in the seed and targets do not overlap") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const WorldScene a = make_scene(seed, 6);
    const WorldScene b = make_scene(seed, 6);
    CHECK(a.raster == b.raster);
    REQUIRE(a.targets.size() == 6);
    for (std::size_t i = 0; i < a.targets.size(); ++i) {
      CHECK(a.targets[i].label == target_palette()[i].name);
      for (std::size_t j = i + 1; j < a.targets.size(); ++j) {
        const double d = std::hypot(a.targets[i].center.x - a.targets[j].center.x,
                                    a.targets[i].center.y - a.targets[j].center.y);
        CHECK(d > a.targets[i].radius + a.targets[j].radius);
      }
    }
    CHECK(reachable(a.aim_at(a.targets[0].center)));
  }
  CHECK_FALSE(make_scene(1, 3).raster == make_scene(2, 3).raster);
  CHECK_THROWS_AS(make_scene(1, 7), DomainError);
}

TEST_CASE("scene save/load round-trip") {
  test::TempDir dir("vc");
  const WorldScene a = make_scene(5, 4);
  a.save(dir / "scene");
  const WorldScene b = WorldScene::load(dir / "scene");
  CHECK(b.raster == a.raster);
  REQUIRE(b.targets.size() == a.targets.size());
  CHECK(b.targets[2].label == a.targets[2].label);
  CHECK(b.targets[2].center.x == a.targets[2].center.x);
  CHECK(b.pan_px_per_deg == a.pan_px_per_deg);
  CHECK(render_frame(b, pose(3, 31), {320, 180}) == render_frame(a, pose(3, 31), {320, 180}));
}

TEST_CASE("aiming at a target puts it at the frame centre") {
  const FrameSize out{640, 360};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const WorldScene scene = make_scene(seed, 4);
    for (const auto& t : scene.targets) {
      const PanTilt aim = scene.aim_at(t.center);
      if (!reachable(aim)) continue;
      const PanTilt q = clamp_quantize(aim.pan, aim.tilt);
      const auto d = find(render_frame(scene, pose(q.pan, q.tilt), out), t.label);
      REQUIRE(d);
      const Point2 c = bbox_center(d->box);
      CHECK(std::abs(c.x - out.width / 2.0) <= 2.0);
      CHECK(std::abs(c.y - out.height / 2.0) <= 2.0);
    }
  }
}

TEST_CASE("analytic target position matches the detected centre") {
  std::mt19937_64 rng(3);
  const FrameSize out{640, 360};
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const WorldScene scene = make_scene(100 + static_cast<std::uint64_t>(trial), 3);
    const PanTilt aim = scene.aim_at(scene.targets[0].center);
    const double z = 1 + 0.05 * static_cast<double>(rng() % 40);
    const CameraState s = pose(std::clamp(std::round(aim.pan) + static_cast<double>(rng() % 11) - 5, -90.0, 90.0),
                               std::clamp(std::round(aim.tilt) + static_cast<double>(rng() % 7) - 3, 0.0, 60.0), z);
    for (const auto& t : scene.targets) {
      const auto p = target_frame_position(scene, s, t.id, out);
      if (!p) continue;
      const double r = t.radius * z;
      if (p->x - r < 2 || p->y - r < 2 || p->x + r > out.width - 3 || p->y + r > out.height - 3) continue;
      const auto d = find(render_frame(scene, s, out), t.label);
      REQUIRE(d);
      const Point2 c = bbox_center(d->box);
      CHECK(std::abs(c.x - p->x) <= 1.5);
      CHECK(std::abs(c.y - p->y) <= 1.5);
      ++checked;
    }
  }
  CHECK(checked >= 40);
  const WorldScene scene = make_scene(1, 2);
  CHECK_THROWS_AS(target_frame_position(scene, pose(0, 30), 9, out), NotFoundError);
}

TEST_CASE("apparent size grows with zoom") {
  const WorldScene scene = make_scene(9, 3);
  const SceneTarget& t = scene.targets[0];
  const PanTilt q = clamp_quantize(scene.aim_at(t.center).pan, scene.aim_at(t.center).tilt);
  double prev = 0;
  for (double z = 1; z <= 7.0 + 1e-9; z += 0.5) {
    const auto d = find(render_frame(scene, pose(q.pan, q.tilt, std::min(z, 7.0)), {640, 360}), t.label);
    REQUIRE(d);
    CHECK(d->box.width() > prev);
    CHECK(d->box.width() == doctest::Approx(2 * t.radius * z).epsilon(0.15));
    prev = d->box.width();
  }
}

TEST_CASE("render validates its inputs") {
  const WorldScene scene = make_scene(1, 1);
  CHECK_THROWS_AS(render_frame(scene, pose(0, 30), {1, 5}), DomainError);
  CameraState bad = pose(0, 30);
  bad.zoom = 8;
  CHECK_THROWS_AS(render_frame(scene, bad, {64, 36}), DomainError);
  const ImageFrame f = render_frame(scene, pose(0, 30), {64, 36});
  CHECK(f.format() == scene.raster.format());
}
