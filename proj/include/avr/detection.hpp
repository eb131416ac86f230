#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avr/geometry.hpp"
#include "avr/image.hpp"

namespace avr {

struct Detection {
  BoundingBox box;
  std::string label;
  double score = 0.0;  // [0, 1]
  std::int64_t area = 0;  // component pixel count; 0 when unknown (remote)

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Inclusive per-channel window on 8-bit-scaled sample values.
struct ColorClass {
  std::string label;
  std::array<std::uint16_t, 3> min{0, 0, 0};
  std::array<std::uint16_t, 3> max{255, 255, 255};

  bool matches(const std::uint16_t* rgb) const {
    for (int c = 0; c < 3; ++c) {
      if (rgb[c] < min[c] || rgb[c] > max[c]) return false;
    }
    return true;
  }
};

struct DetectorConfig {
  enum class Mode { reference_blob, remote };

  Mode mode = Mode::reference_blob;
  std::vector<ColorClass> classes;
  std::string endpoint;  // "http://host:port/path"
  int timeout_ms = 2000;

  /// Reference-mode config for the saturated palette used by the virtual
  /// camera (red, green, blue, yellow, magenta, cyan).
  static DetectorConfig palette();
  static DetectorConfig remote_endpoint(std::string url, int timeout_ms = 2000);
  void validate() const;
};

inline constexpr std::int64_t kMinComponentArea = 9;

/// Connected components (8-connectivity) of pixels satisfying each colour
/// class, reported as tight index-space bounding boxes, largest area first.
/// Components under kMinComponentArea pixels are dropped.
std::vector<Detection> detect_blobs(const ImageFrame& frame, const DetectorConfig& cfg);

/// Highest score with matching label (any label when task_label is empty);
/// ties go to the larger box area, then the smaller x_min.
std::optional<Detection> select_target(const std::vector<Detection>& dets,
                                       const std::string& task_label);

/// POSTs the frame as PNG to cfg.endpoint and parses the JSON reply.
/// Throws TransportError on network/HTTP/parse failure and ValidationError
/// for out-of-range scores or malformed boxes.
std::vector<Detection> remote_detect(const ImageFrame& frame, const DetectorConfig& cfg,
                                     const std::string& task_label = {});

/// Parses `{"detections":[{"box":[...],"label":...,"score":...}]}` and clamps
/// boxes to the frame.
std::vector<Detection> parse_detection_response(const std::string& body, FrameSize frame);

/// Dispatches on cfg.mode.
std::vector<Detection> detect(const ImageFrame& frame, const DetectorConfig& cfg,
                              const std::string& task_label = {});

}  // namespace avr
