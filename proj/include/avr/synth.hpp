#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avr/dataset.hpp"
#include "avr/virtual_camera.hpp"

namespace avr {

struct SynthOptions {
  std::uint64_t seed = 1;
  std::size_t frames = 20;
  int targets = 3;
  FrameSize size{640, 360};
  std::vector<std::string> views{"top"};
  double zoom = 1.0;          // on the 0.05 grid
  int wobble_pan_deg = 6;     // trajectory stays within +-wobble of target 0
  int wobble_tilt_deg = 4;
  std::string task = "red";   // written to the manifest name only
};

struct SynthResult {
  EpisodeManifest manifest;
  WorldScene scene;
  std::vector<CameraState> poses;
};

/// Scripted trajectory around target 0 on integer pan/tilt steps. The top
/// view follows the trajectory; left and front are fixed side views. The
/// scene is saved next to the streams in `scene/`. Deterministic in `seed`.
SynthResult synthesize_episode(const std::filesystem::path& dir, const SynthOptions& opts);

/// Poses of the scripted trajectory without rendering anything.
std::vector<CameraState> synth_trajectory(const WorldScene& scene, const SynthOptions& opts);

}  // namespace avr
