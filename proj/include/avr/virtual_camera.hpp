#pragma once

// Flat-world stand-in for the pan-tilt-zoom camera. A pose selects a view
// center on a world raster (linear in pan and tilt; pan 0 / tilt 30 is the
// world center), the zoom divides the field of view, and the crop is
// resampled to the output size.

#include <array>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "avr/geometry.hpp"
#include "avr/gimbal.hpp"
#include "avr/image.hpp"

namespace avr {

struct SceneTarget {
  int id = 0;
  std::string label;  // colour name, matches DetectorConfig::palette()
  std::array<std::uint16_t, 3> color{};
  Point2 center;      // world pixels, integer valued
  double radius = 0;  // world pixels
};

struct SceneOptions {
  FrameSize out_size{640, 360};  // field of view at z = 1, world pixels
  int pan_px_per_deg = 4;
  int tilt_px_per_deg = 6;
  int margin = 32;
  int min_radius = 8;
  int max_radius = 14;
};

struct WorldScene {
  ImageFrame raster;
  std::vector<SceneTarget> targets;
  double pan_px_per_deg = 4;
  double tilt_px_per_deg = 6;
  double base_fov_width = 640;  // world pixels covered at z = 1
  double base_fov_height = 360;

  Point2 world_center() const;
  /// World point at the middle of the view for (pan, tilt).
  Point2 view_center(double pan_deg, double tilt_deg) const;
  /// Unquantized pan/tilt that puts `world` at the view center.
  PanTilt aim_at(Point2 world) const;
  const SceneTarget& target(int id) const;

  nlohmann::json describe() const;
  void save(const std::filesystem::path& dir) const;
  static WorldScene load(const std::filesystem::path& dir);
};

/// Seeded world: textured neutral background with non-overlapping solid
/// discs of distinct palette colours. Target 0 is always reachable by the
/// gimbal. Throws DomainError for more targets than palette colours.
WorldScene make_scene(std::uint64_t seed, int n_targets, const SceneOptions& opts = {});

/// Crop of side base_fov / z around the view center, bilinearly resampled.
ImageFrame render_frame(const WorldScene& scene, const CameraState& s, FrameSize out);

/// Analytic frame position of a target center; nullopt when outside the
/// frame. Throws NotFoundError for unknown ids.
std::optional<Point2> target_frame_position(const WorldScene& scene, const CameraState& s,
                                            int target_id, FrameSize out);

/// Palette shared by the scene generator and the reference detector.
struct PaletteColor {
  const char* name;
  std::array<std::uint16_t, 3> rgb;
};
const std::vector<PaletteColor>& target_palette();

}  // namespace avr
