#include "avr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "avr/errors.hpp"

namespace avr {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTrajectorySalt = 0x9e3779b97f4a7c15ULL;

CameraState pose(double pan, double tilt, double zoom) {
  CameraState s;
  s.pan = std::clamp(pan, -kPanLimitDeg, kPanLimitDeg);
  s.tilt = std::clamp(tilt, kTiltMinDeg, kTiltMaxDeg);
  s.zoom = zoom;
  s.focal_mm = focal_from_zoom(zoom);
  return s;
}

CameraState side_view(const std::string& view, double zoom) {
  if (view == "left") return pose(-45.0, 30.0, zoom);
  if (view == "front") return pose(45.0, 20.0, zoom);
  throw DomainError("no fixed pose for view '" + view + "'");
}

}  // namespace

std::vector<CameraState> synth_trajectory(const WorldScene& scene, const SynthOptions& opts) {
  if (opts.targets < 1) throw DomainError("the trajectory follows target 0; need at least one");
  const PanTilt aim = scene.aim_at(scene.target(0).center);
  const double pan0 = std::round(aim.pan);
  const double tilt0 = std::round(aim.tilt);
  std::mt19937_64 rng(opts.seed ^ kTrajectorySalt);
  std::vector<CameraState> poses;
  poses.reserve(opts.frames);
  int dp = 0;
  int dt = 0;
  for (std::size_t i = 0; i < opts.frames; ++i) {
    // Bounded random walk in whole degrees.
    dp = std::clamp(dp + static_cast<int>(rng() % 3) - 1, -opts.wobble_pan_deg, opts.wobble_pan_deg);
    dt = std::clamp(dt + static_cast<int>(rng() % 3) - 1, -opts.wobble_tilt_deg,
                    opts.wobble_tilt_deg);
    poses.push_back(pose(pan0 + dp, tilt0 + dt, opts.zoom));
  }
  return poses;
}

SynthResult synthesize_episode(const fs::path& dir, const SynthOptions& opts) {
  if (!opts.size.valid()) throw DomainError("frame size must be at least 2x2");
  if (std::find(opts.views.begin(), opts.views.end(), "top") == opts.views.end()) {
    throw DomainError("the top view is required");
  }
  if (opts.wobble_pan_deg < 0 || opts.wobble_tilt_deg < 0) {
    throw DomainError("wobble must be non-negative");
  }
  SceneOptions so;
  so.out_size = opts.size;
  SynthResult res;
  res.scene = make_scene(opts.seed, opts.targets, so);
  res.poses = synth_trajectory(res.scene, opts);

  EpisodeManifest m;
  m.name = "synth-" + std::to_string(opts.seed) + "-" + opts.task;
  m.frame_rate_hz = 60.0;
  m.frame_size = opts.size;
  m.layout = opts.views;
  m.arms_present = false;
  m.frame_format = res.scene.raster.format();
  m.frame_channels = res.scene.raster.channels();

  std::map<std::string, ImageFrame> fixed;
  for (const auto& v : opts.views) {
    if (v != "top") fixed[v] = render_frame(res.scene, side_view(v, opts.zoom), opts.size);
  }

  res.scene.save(dir / "scene");
  EpisodeWriter writer(dir, m);
  for (std::size_t i = 0; i < res.poses.size(); ++i) {
    const CameraState& s = res.poses[i];
    EpisodeRecord r;
    r.t_ms = std::llround(static_cast<double>(i) * 1000.0 / m.frame_rate_hz);
    r.gimbal_pitch = static_cast<float>(s.tilt);
    r.gimbal_yaw = static_cast<float>(s.pan);
    r.zoom = static_cast<float>(s.zoom);
    r.focal_mm = static_cast<float>(s.focal_mm);
    const Affine2D zt = zoom_transform(s.zoom, opts.size);
    const auto& z = zt.entries();
    for (std::size_t k = 0; k < 9; ++k) r.zoom_affine[k] = static_cast<float>(z[k]);
    std::map<std::string, ImageFrame> frames;
    for (const auto& v : opts.views) {
      r.frames[v] = frame_ref(v, i);
      frames[v] = v == "top" ? render_frame(res.scene, s, opts.size) : fixed.at(v);
    }
    writer.append(r, frames);
  }
  res.manifest = writer.close();
  return res;
}

}  // namespace avr
