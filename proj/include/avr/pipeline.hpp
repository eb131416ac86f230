#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>

#include "avr/dataset.hpp"
#include "avr/detection.hpp"
#include "avr/format_guard.hpp"
#include "avr/kernels.hpp"
#include "avr/sr_network.hpp"
#include "avr/zoom.hpp"

namespace avr {

enum class SrMode { network, bicubic, none };
enum class MissPolicy { hold_last, passthrough };

std::string to_string(SrMode m);
std::string to_string(MissPolicy m);
SrMode sr_mode_from_string(const std::string& s);
MissPolicy miss_policy_from_string(const std::string& s);

struct PipelineConfig {
  ZoomParams zoom;
  DetectorConfig detector = DetectorConfig::palette();
  SrMode sr = SrMode::bicubic;
  MissPolicy miss = MissPolicy::passthrough;
  std::string task_label;
  int sr_factor = 2;             // r cap when no network is loaded
  std::string view = "top";      // camera stream that is processed
  int chunk_frames = 16;         // frames held in memory per batch

  void validate() const;
  nlohmann::json to_json() const;
};

/// Carried between frames; only hold_last reads it.
struct PipelineState {
  std::optional<Affine2D> last_affine;
  std::optional<double> last_scale;
  std::optional<Detection> last_detection;
};

struct FrameResult {
  ImageFrame frame;
  Affine2D affine;
  double scale = 1.0;
  std::optional<Detection> detection;  // detection the transform was built from
  GuardReport guard;
  bool miss = false;
  bool held = false;                   // miss resolved by reusing the last transform
  int sr_factor = 1;                   // 1 when no super-resolution was applied
  kernels::Rect sr_region;             // output pixels taken from the SR patch
  std::string error;
};

struct EpisodeSummary {
  std::size_t frames = 0;
  std::size_t hits = 0;
  std::size_t misses = 0;
  double mean_scale = 0.0;
  double runtime_s = 0.0;

  nlohmann::json to_json() const;
};

class Pipeline {
 public:
  /// `network` is required for SrMode::network.
  explicit Pipeline(PipelineConfig cfg, std::optional<sr::SRNetwork> network = std::nullopt);

  const PipelineConfig& config() const { return cfg_; }

  /// detect -> recenter -> zoom -> SR -> format guard for one frame.
  FrameResult process_frame(const ImageFrame& frame, PipelineState& state) const;

  /// Runs every record of `in_dir` and writes a processed episode to
  /// `out_dir` plus summary.json. Non-image streams are copied unchanged.
  EpisodeSummary process_episode(const std::filesystem::path& in_dir,
                                 const std::filesystem::path& out_dir) const;

  /// Transform decision for one frame, split out so detection can run in
  /// parallel while hold_last is resolved in frame order.
  struct Plan {
    std::optional<Detection> detection;
    Affine2D affine;
    double scale = 1.0;
    bool miss = false;
    bool held = false;
    bool passthrough = false;
    std::string error;
  };

  Plan plan(const ImageFrame& frame) const;
  void resolve(Plan& p, PipelineState& state) const;
  FrameResult render(const ImageFrame& frame, const Plan& p) const;

 private:
  PipelineConfig cfg_;
  std::optional<sr::SRNetwork> network_;
};

}  // namespace avr
