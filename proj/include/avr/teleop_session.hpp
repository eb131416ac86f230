#pragma once

// Transport-independent state machine behind the live service. One Session
// owns the camera, the pose gate, the frame cadence and at most one open
// recording; connected clients are identified by an opaque id.

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avr/dataset.hpp"
#include "avr/gimbal.hpp"
#include "avr/virtual_camera.hpp"

namespace avr {

inline constexpr int kProtocolVersion = 1;
inline constexpr double kFrameRateHz = 60.0;

enum class Role { none, operator_, viewer };
std::string to_string(Role r);

struct SessionOptions {
  FrameSize out_size{640, 360};
  std::filesystem::path record_root = ".";  // recordings go to record_root/<name>
  double frame_rate_hz = kFrameRateHz;
  int png_level = 1;
  CameraState initial;  // pan 0, tilt 0, zoom 1
};

struct Outbound {
  nlohmann::json msg;
  bool broadcast = false;  // false: only the client that caused it
};

class Session {
 public:
  using ClientId = std::uint64_t;

  Session(std::shared_ptr<const WorldScene> scene, SessionOptions opts);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Parses and applies one inbound text message. Never throws; rejects come
  /// back as `error` messages addressed to the sender.
  std::vector<Outbound> handle_text(ClientId client, std::string_view text);
  std::vector<Outbound> handle(ClientId client, const nlohmann::json& msg);

  /// Advances rate zoom and emits at most one frame per cadence period.
  /// Ticks must not go backwards; a regressing tick is ignored.
  std::vector<Outbound> tick(double t_ms);

  /// Releases the client's role. The operator slot becomes free.
  void disconnect(ClientId client);

  /// Closes an open recording, if any, and reports it.
  std::optional<Outbound> stop_recording();

  Role role(ClientId client) const;
  const CameraState& camera() const { return camera_; }
  bool recording() const { return writer_ != nullptr; }
  std::uint64_t frames_emitted() const { return frame_seq_; }
  std::uint64_t states_emitted() const { return state_seq_; }
  double zoom_velocity() const { return zoom_velocity_; }
  nlohmann::json state_message();

 private:
  std::vector<Outbound> on_hello(ClientId client, const nlohmann::json& msg);
  std::vector<Outbound> on_pose(const nlohmann::json& msg);
  std::vector<Outbound> on_zoom(const nlohmann::json& msg);
  std::vector<Outbound> on_record(const nlohmann::json& msg);
  Outbound state_out() { return {state_message(), true}; }

  std::shared_ptr<const WorldScene> scene_;
  SessionOptions opts_;
  CameraState camera_;
  RateGate pose_gate_;
  RateGate frame_gate_;
  std::map<ClientId, Role> clients_;
  std::optional<ClientId> operator_;
  double zoom_velocity_ = 0.0;
  std::optional<double> last_tick_ms_;
  std::uint64_t frame_seq_ = 0;
  std::uint64_t state_seq_ = 0;
  std::unique_ptr<EpisodeWriter> writer_;
  std::string recording_name_;
  std::optional<std::int64_t> last_record_t_ms_;
};

/// Outbound error message.
nlohmann::json error_message(const std::string& code, const std::string& msg);

}  // namespace avr
