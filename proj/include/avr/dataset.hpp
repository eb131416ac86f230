#pragma once

// Episode layout on disk:
//
//   <dir>/manifest.json                 EpisodeManifest
//   <dir>/streams.jsonl                 one EpisodeRecord per line
//   <dir>/frames/<view>_<seq:06>.png    image streams
//   <dir>/depth/<seq:06>.png            optional 16-bit depth
//
// Floats are written with 9 significant digits, which round-trips float32
// exactly.

#include <array>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avr/geometry.hpp"
#include "avr/image.hpp"

namespace avr {

inline constexpr const char* kEpisodeSchema = "avr-episode/1";
inline constexpr const char* kIndexSchema = "avr-index/1";

/// Camera views of the three-camera layout.
const std::vector<std::string>& known_views();

/// Per-frame output of the image pipeline, appended to processed episodes.
struct ProcessingInfo {
  bool hit = false;
  float scale = 1.0f;
  std::array<float, 9> affine{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::string label;
  std::string error;
  float guard_ones_fraction = 1.0f;
  bool guard_corrected = false;

  friend bool operator==(const ProcessingInfo&, const ProcessingInfo&) = default;
};

struct EpisodeRecord {
  std::int64_t t_ms = 0;
  std::array<float, 6> left_joints{};   // radians
  std::array<float, 6> right_joints{};  // radians
  float left_grip = 0.0f;               // [0, 1]
  float right_grip = 0.0f;              // [0, 1]
  float gimbal_pitch = 0.0f;            // degrees, [0, 60]
  float gimbal_yaw = 0.0f;              // degrees, [-90, 90]
  float zoom = 1.0f;                    // [1, 7]
  float focal_mm = 4.8f;
  /// Zoom parameter matrix: the 3x3 transform the zoom applies to the frame.
  std::array<float, 9> zoom_affine{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::map<std::string, std::string> frames;  // view -> path relative to the episode
  std::optional<std::string> depth;
  std::optional<ProcessingInfo> processing;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct EpisodeManifest {
  std::string schema = kEpisodeSchema;
  std::string name;
  double frame_rate_hz = 60.0;
  FrameSize frame_size{640, 360};
  std::vector<std::string> layout{"top"};
  std::size_t record_count = 0;
  bool arms_present = false;
  FormatSpec frame_format;
  int frame_channels = 3;
  nlohmann::json processing;  // null unless produced by the pipeline

  void validate() const;
};

nlohmann::json manifest_to_json(const EpisodeManifest& m);
EpisodeManifest manifest_from_json(const nlohmann::json& j);

/// Canonical relative frame path, e.g. "frames/top_000007.png".
std::string frame_ref(const std::string& view, std::size_t seq);
std::string depth_ref(std::size_t seq);

/// Throws ValidationError naming `index` and the offending field.
void validate_record(const EpisodeRecord& r, std::size_t index, const EpisodeRecord* previous);
void validate_records(std::span<const EpisodeRecord> records);

std::string record_to_json_line(const EpisodeRecord& r);
EpisodeRecord record_from_json_line(const std::string& line, std::size_t index);

/// Lazily loads frames referenced by records.
class FrameLoader {
 public:
  FrameLoader() = default;
  explicit FrameLoader(std::filesystem::path root) : root_(std::move(root)) {}

  ImageFrame load(const EpisodeRecord& r, const std::string& view) const;
  ImageFrame load_ref(const std::string& ref) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

struct Episode {
  EpisodeManifest manifest;
  std::vector<EpisodeRecord> records;
  FrameLoader frames;
};

/// Throws NotFoundError when the manifest is missing and ValidationError for
/// any record or manifest inconsistency.
Episode read_episode(const std::filesystem::path& dir);

/// Streaming single-writer for one episode directory. The manifest is written
/// by close() (or the destructor).
class EpisodeWriter {
 public:
  EpisodeWriter(std::filesystem::path dir, EpisodeManifest manifest);
  ~EpisodeWriter();
  EpisodeWriter(const EpisodeWriter&) = delete;
  EpisodeWriter& operator=(const EpisodeWriter&) = delete;

  /// Validates the record against its predecessor, writes every referenced
  /// frame from `frames` (view -> image) and appends the stream line.
  void append(const EpisodeRecord& r, const std::map<std::string, ImageFrame>& frames,
              const ImageFrame* depth = nullptr);
  /// Stream-only append for frames that already exist on disk.
  void append_record(const EpisodeRecord& r);
  /// Writes an encoded PNG for a frame ref.
  void write_frame_bytes(const std::string& ref, std::span<const std::uint8_t> png);

  EpisodeManifest close();
  std::size_t count() const { return count_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  void append_line(const EpisodeRecord& r);

  std::filesystem::path dir_;
  EpisodeManifest manifest_;
  std::FILE* stream_ = nullptr;
  std::optional<EpisodeRecord> last_;
  std::size_t count_ = 0;
  bool closed_ = false;
};

/// Validates all records first (nothing is written on failure), then writes.
EpisodeManifest write_episode(const std::filesystem::path& dir, EpisodeManifest manifest,
                              std::span<const EpisodeRecord> records,
                              const std::vector<std::map<std::string, ImageFrame>>& frames);

/// Builds <out>/index.json over compatible episodes with zoom histogram and
/// gimbal coverage statistics. Throws AggregationError on frame-size or
/// schema disagreement.
nlohmann::json aggregate(const std::vector<std::filesystem::path>& episodes,
                         const std::filesystem::path& out_dir);

inline constexpr double kZoomHistogramBin = 0.25;

}  // namespace avr
