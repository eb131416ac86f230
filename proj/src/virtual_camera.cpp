#include "avr/virtual_camera.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "avr/errors.hpp"
#include "avr/kernels.hpp"

namespace avr {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kTiltCenterDeg = 30.0;
constexpr int kTargetGap = 6;
constexpr int kMaxPlacementTries = 10000;

class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : eng_(seed) {}
  int uniform_int(int lo, int hi) {  // inclusive
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(eng_() % span);
  }

 private:
  std::mt19937_64 eng_;
};

/// Output pixel -> world point for the current crop.
Affine2D frame_to_world(const WorldScene& scene, const CameraState& s, FrameSize out) {
  const Point2 c = scene.view_center(s.pan, s.tilt);
  const double cw = scene.base_fov_width / s.zoom;
  const double ch = cw * out.height / out.width;
  const double sx = cw / out.width;
  const double sy = ch / out.height;
  return Affine2D::from_rows(sx, 0.0, c.x - sx * out.width / 2.0, 0.0, sy,
                             c.y - sy * out.height / 2.0);
}

}  // namespace

const std::vector<PaletteColor>& target_palette() {
  static const std::vector<PaletteColor> palette{
      {"red", {220, 40, 40}},     {"green", {40, 200, 60}},    {"blue", {40, 70, 220}},
      {"yellow", {230, 210, 40}}, {"magenta", {210, 50, 200}}, {"cyan", {40, 200, 210}},
  };
  return palette;
}

Point2 WorldScene::world_center() const {
  return {std::floor(raster.width() / 2.0), std::floor(raster.height() / 2.0)};
}

Point2 WorldScene::view_center(double pan_deg, double tilt_deg) const {
  const Point2 c = world_center();
  return {c.x + pan_deg * pan_px_per_deg, c.y + (tilt_deg - kTiltCenterDeg) * tilt_px_per_deg};
}

PanTilt WorldScene::aim_at(Point2 world) const {
  const Point2 c = world_center();
  return {(world.x - c.x) / pan_px_per_deg, kTiltCenterDeg + (world.y - c.y) / tilt_px_per_deg};
}

const SceneTarget& WorldScene::target(int id) const {
  for (const auto& t : targets) {
    if (t.id == id) return t;
  }
  throw NotFoundError("no target with id " + std::to_string(id));
}

json WorldScene::describe() const {
  json j;
  j["world_size"] = {raster.width(), raster.height()};
  j["pan_px_per_deg"] = pan_px_per_deg;
  j["tilt_px_per_deg"] = tilt_px_per_deg;
  j["base_fov"] = {base_fov_width, base_fov_height};
  json ts = json::array();
  for (const auto& t : targets) {
    ts.push_back({{"id", t.id},
                  {"label", t.label},
                  {"color", t.color},
                  {"center", {t.center.x, t.center.y}},
                  {"radius", t.radius}});
  }
  j["targets"] = ts;
  return j;
}

void WorldScene::save(const fs::path& dir) const {
  fs::create_directories(dir);
  write_png(raster, dir / "world.png");
  std::ofstream os(dir / "targets.json");
  if (!os) throw IoError("cannot write scene description to '" + dir.string() + "'");
  os << describe().dump(2) << "\n";
}

WorldScene WorldScene::load(const fs::path& dir) {
  std::ifstream is(dir / "targets.json");
  if (!is) throw NotFoundError("no targets.json in '" + dir.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  const json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw IoError("targets.json is not valid JSON");
  WorldScene scene;
  scene.raster = read_png(dir / "world.png");
  try {
    scene.pan_px_per_deg = j.at("pan_px_per_deg").get<double>();
    scene.tilt_px_per_deg = j.at("tilt_px_per_deg").get<double>();
    scene.base_fov_width = j.at("base_fov").at(0).get<double>();
    scene.base_fov_height = j.at("base_fov").at(1).get<double>();
    for (const auto& t : j.at("targets")) {
      SceneTarget st;
      st.id = t.at("id").get<int>();
      st.label = t.at("label").get<std::string>();
      st.color = t.at("color").get<std::array<std::uint16_t, 3>>();
      st.center = {t.at("center").at(0).get<double>(), t.at("center").at(1).get<double>()};
      st.radius = t.at("radius").get<double>();
      scene.targets.push_back(st);
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed targets.json: ") + e.what());
  }
  return scene;
}

WorldScene make_scene(std::uint64_t seed, int n_targets, const SceneOptions& opts) {
  if (n_targets < 0) throw DomainError("target count must be non-negative");
  if (n_targets > static_cast<int>(target_palette().size())) {
    throw DomainError("at most " + std::to_string(target_palette().size()) + " targets");
  }
  if (!opts.out_size.valid()) throw DomainError("field of view must be at least 2x2");

  const int pan_extent = static_cast<int>(kPanLimitDeg) * opts.pan_px_per_deg;
  const int tilt_extent = static_cast<int>(kTiltMaxDeg - kTiltCenterDeg) * opts.tilt_px_per_deg;
  // Even dimensions keep the world center, and so every view center, on integers.
  const int world_w = (opts.out_size.width + 2 * pan_extent + 2 * opts.margin + 1) / 2 * 2;
  const int world_h = (opts.out_size.height + 2 * tilt_extent + 2 * opts.margin + 1) / 2 * 2;

  WorldScene scene;
  scene.pan_px_per_deg = opts.pan_px_per_deg;
  scene.tilt_px_per_deg = opts.tilt_px_per_deg;
  scene.base_fov_width = opts.out_size.width;
  scene.base_fov_height = opts.out_size.height;

  FormatSpec fmt;
  fmt.metadata = {{"source", "avr-virtual-camera"}};
  scene.raster = ImageFrame(world_w, world_h, 3, fmt);
  SceneRng rng(seed);
  for (int y = 0; y < world_h; ++y) {
    auto row = scene.raster.row(y);
    for (int x = 0; x < world_w; ++x) {
      const int base = 128 + rng.uniform_int(-6, 6);
      for (int c = 0; c < 3; ++c) {
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<std::uint16_t>(base + rng.uniform_int(-2, 2));
      }
    }
  }

  const Point2 wc = scene.world_center();
  for (int id = 0; id < n_targets; ++id) {
    const int r = rng.uniform_int(opts.min_radius, opts.max_radius);
    int x_lo = opts.margin + r;
    int x_hi = world_w - opts.margin - r - 1;
    int y_lo = opts.margin + r;
    int y_hi = world_h - opts.margin - r - 1;
    if (id == 0) {
      // Keep the task target inside the region the gimbal can center.
      x_lo = static_cast<int>(wc.x) - pan_extent + r;
      x_hi = static_cast<int>(wc.x) + pan_extent - r;
      y_lo = static_cast<int>(wc.y) - tilt_extent + r;
      y_hi = static_cast<int>(wc.y) + tilt_extent - r;
    }
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlacementTries && !placed; ++attempt) {
      const Point2 c{static_cast<double>(rng.uniform_int(x_lo, x_hi)),
                     static_cast<double>(rng.uniform_int(y_lo, y_hi))};
      placed = true;
      for (const auto& t : scene.targets) {
        const double d = std::hypot(c.x - t.center.x, c.y - t.center.y);
        if (d < t.radius + r + kTargetGap) {
          placed = false;
          break;
        }
      }
      if (placed) {
        const auto& pc = target_palette()[static_cast<std::size_t>(id)];
        scene.targets.push_back({id, pc.name, pc.rgb, c, static_cast<double>(r)});
      }
    }
    if (!placed) throw DomainError("could not place target " + std::to_string(id));
  }

  for (const auto& t : scene.targets) {
    const int cx = static_cast<int>(t.center.x);
    const int cy = static_cast<int>(t.center.y);
    const int r = static_cast<int>(t.radius);
    for (int y = cy - r; y <= cy + r; ++y) {
      for (int x = cx - r; x <= cx + r; ++x) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > r * r) continue;
        for (int c = 0; c < 3; ++c) scene.raster.at(x, y, c) = t.color[static_cast<std::size_t>(c)];
      }
    }
  }
  return scene;
}

ImageFrame render_frame(const WorldScene& scene, const CameraState& s, FrameSize out) {
  if (!out.valid()) throw DomainError("output size must be at least 2x2");
  if (!(s.zoom >= kZoomMin && s.zoom <= kZoomMax)) throw DomainError("zoom outside [1, 7]");
  ImageFrame frame(out.width, out.height, scene.raster.channels(), scene.raster.format());
  kernels::warp_bilinear(scene.raster, frame_to_world(scene, s, out), frame,
                         kernels::Rect::full(out), kernels::Outside::fill_black);
  return frame;
}

std::optional<Point2> target_frame_position(const WorldScene& scene, const CameraState& s,
                                            int target_id, FrameSize out) {
  const SceneTarget& t = scene.target(target_id);
  const Point2 p = frame_to_world(scene, s, out).inverse().apply(t.center);
  if (p.x < 0.0 || p.y < 0.0 || p.x > out.width - 1.0 || p.y > out.height - 1.0) {
    return std::nullopt;
  }
  return p;
}

}  // namespace avr
