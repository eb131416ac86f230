#include "avr/teleop_session.hpp"

#include <cmath>
#include <regex>

#include "avr/errors.hpp"
#include "avr/image.hpp"

namespace avr {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::regex kRecordingName("[A-Za-z0-9_][A-Za-z0-9_.-]{0,63}");

bool finite_number(const json& j) { return j.is_number() && std::isfinite(j.get<double>()); }

Outbound reject(const std::string& code, const std::string& msg) {
  return {error_message(code, msg), false};
}

std::array<float, 9> zoom_matrix(double z, FrameSize f) {
  const Affine2D t = zoom_transform(z, f);
  const auto& e = t.entries();
  std::array<float, 9> out{};
  for (std::size_t i = 0; i < 9; ++i) out[i] = static_cast<float>(e[i]);
  return out;
}

}  // namespace

std::string to_string(Role r) {
  switch (r) {
    case Role::operator_:
      return "operator";
    case Role::viewer:
      return "viewer";
    case Role::none:
      return "none";
  }
  return "none";
}

json error_message(const std::string& code, const std::string& msg) {
  return {{"type", "error"}, {"code", code}, {"msg", msg}};
}

Session::Session(std::shared_ptr<const WorldScene> scene, SessionOptions opts)
    : scene_(std::move(scene)),
      opts_(std::move(opts)),
      camera_(opts_.initial),
      pose_gate_(kPoseRateHz),
      frame_gate_(opts_.frame_rate_hz) {
  if (!scene_) throw DomainError("session needs a scene");
  if (!opts_.out_size.valid()) throw DomainError("output size must be at least 2x2");
  camera_.focal_mm = focal_from_zoom(camera_.zoom);
  if (!camera_.valid()) throw DomainError("initial camera state violates its invariants");
}

Session::~Session() = default;

Role Session::role(ClientId client) const {
  const auto it = clients_.find(client);
  return it == clients_.end() ? Role::none : it->second;
}

json Session::state_message() {
  return {{"type", "state"},         {"pan", camera_.pan},
          {"tilt", camera_.tilt},    {"zoom", camera_.zoom},
          {"focal_mm", camera_.focal_mm}, {"seq", state_seq_++},
          {"recording", recording()}, {"zoom_v", zoom_velocity_}};
}

std::vector<Outbound> Session::handle_text(ClientId client, std::string_view text) {
  const json msg = json::parse(text.begin(), text.end(), nullptr, false);
  if (msg.is_discarded()) return {reject("bad_json", "message is not valid JSON")};
  return handle(client, msg);
}

std::vector<Outbound> Session::handle(ClientId client, const json& msg) {
  try {
    if (!msg.is_object()) return {reject("bad_message", "message must be a JSON object")};
    const auto type_it = msg.find("type");
    if (type_it == msg.end() || !type_it->is_string()) {
      return {reject("bad_message", "missing string field 'type'")};
    }
    const std::string type = type_it->get<std::string>();
    if (type == "hello") return on_hello(client, msg);
    if (type != "pose" && type != "zoom" && type != "record") {
      return {reject("unsupported", "unknown message type '" + type + "'")};
    }
    const Role r = role(client);
    if (r == Role::none) return {reject("no_hello", "send hello first")};
    if (r != Role::operator_) return {reject("forbidden", "viewers cannot send '" + type + "'")};
    if (type == "pose") return on_pose(msg);
    if (type == "zoom") return on_zoom(msg);
    return on_record(msg);
  } catch (const std::exception& e) {
    return {reject("bad_message", e.what())};
  }
}

std::vector<Outbound> Session::on_hello(ClientId client, const json& msg) {
  std::string wanted = "operator";
  if (const auto it = msg.find("role"); it != msg.end()) {
    if (!it->is_string()) return {reject("bad_message", "'role' must be a string")};
    wanted = it->get<std::string>();
    if (wanted != "operator" && wanted != "viewer") {
      return {reject("bad_message", "'role' must be operator or viewer")};
    }
  }
  if (const auto it = msg.find("proto"); it != msg.end()) {
    if (!it->is_number_integer()) return {reject("bad_message", "'proto' must be an integer")};
    if (it->get<std::int64_t>() != kProtocolVersion) {
      return {reject("unsupported", "protocol version " + it->dump() + " is not supported")};
    }
  }
  if (role(client) == Role::operator_ && wanted == "viewer") operator_.reset();
  Role granted = Role::viewer;
  if (wanted == "operator" && (!operator_ || *operator_ == client)) {
    granted = Role::operator_;
    operator_ = client;
  }
  clients_[client] = granted;
  json reply = state_message();
  reply["role"] = to_string(granted);
  return {{reply, false}};
}

std::vector<Outbound> Session::on_pose(const json& msg) {
  const auto q = msg.find("q");
  if (q == msg.end() || !q->is_array() || q->size() != 4) {
    return {reject("bad_message", "'q' must be [w, x, y, z]")};
  }
  for (const auto& v : *q) {
    if (!finite_number(v)) return {reject("bad_message", "'q' entries must be finite numbers")};
  }
  const auto t = msg.find("t_ms");
  if (t == msg.end() || !finite_number(*t)) {
    return {reject("bad_message", "'t_ms' must be a finite number")};
  }
  const Quaternion quat{(*q)[0].get<double>(), (*q)[1].get<double>(), (*q)[2].get<double>(),
                        (*q)[3].get<double>()};
  if (!(quat.norm() >= 1e-9) || !std::isfinite(quat.norm())) {
    return {reject("bad_message", "'q' must have non-zero finite norm")};
  }
  const double t_ms = t->get<double>();
  switch (pose_gate_.admit(t_ms)) {
    case Admission::time_regression:
      return {reject("time_regression", "pose t_ms went backwards")};
    case Admission::too_soon:
      return {};
    case Admission::accepted:
      break;
  }
  camera_ = map_pose(quat, camera_);
  camera_.last_update_ms = t_ms;
  return {state_out()};
}

std::vector<Outbound> Session::on_zoom(const json& msg) {
  const auto mode = msg.find("mode");
  if (mode == msg.end() || !mode->is_string()) {
    return {reject("bad_message", "'mode' must be step or rate")};
  }
  if (*mode == "step") {
    const auto dir = msg.find("dir");
    if (dir == msg.end() || !dir->is_number_integer()) {
      return {reject("bad_message", "'dir' must be +1 or -1")};
    }
    const auto d = dir->get<std::int64_t>();
    if (d != 1 && d != -1) return {reject("out_of_range", "'dir' must be +1 or -1")};
    zoom_velocity_ = 0.0;
    camera_ = zoom_step(camera_, static_cast<int>(d));
    return {state_out()};
  }
  if (*mode == "rate") {
    const auto v = msg.find("v");
    if (v == msg.end() || !finite_number(*v)) {
      return {reject("bad_message", "'v' must be a finite number")};
    }
    const double vel = v->get<double>();
    if (std::abs(vel) > kMaxZoomRate) return {reject("out_of_range", "|v| must be at most 2")};
    zoom_velocity_ = vel;
    return {state_out()};
  }
  return {reject("bad_message", "'mode' must be step or rate")};
}

std::vector<Outbound> Session::on_record(const json& msg) {
  const auto action = msg.find("action");
  if (action == msg.end() || !action->is_string()) {
    return {reject("bad_message", "'action' must be start or stop")};
  }
  if (*action == "stop") {
    auto done = stop_recording();
    if (!done) return {reject("not_recording", "no active recording")};
    return {*done, state_out()};
  }
  if (*action != "start") return {reject("bad_message", "'action' must be start or stop")};
  if (recording()) return {reject("already_recording", "'" + recording_name_ + "' is open")};
  const auto name = msg.find("name");
  if (name == msg.end() || !name->is_string() ||
      !std::regex_match(name->get<std::string>(), kRecordingName)) {
    return {reject("bad_message", "'name' must match [A-Za-z0-9_][A-Za-z0-9_.-]{0,63}")};
  }
  const std::string n = name->get<std::string>();
  const fs::path dir = opts_.record_root / n;
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_empty(dir, ec)) {
    return {reject("io_error", "episode directory '" + dir.string() + "' is not empty")};
  }
  EpisodeManifest m;
  m.name = n;
  m.frame_rate_hz = opts_.frame_rate_hz;
  m.frame_size = opts_.out_size;
  m.layout = {"top"};
  m.arms_present = false;
  m.frame_format = scene_->raster.format();
  m.frame_channels = scene_->raster.channels();
  try {
    writer_ = std::make_unique<EpisodeWriter>(dir, m);
  } catch (const std::exception& e) {
    return {reject("io_error", e.what())};
  }
  recording_name_ = n;
  last_record_t_ms_.reset();
  json started = {{"type", "record"}, {"status", "started"}, {"name", n}};
  return {{started, true}, state_out()};
}

std::optional<Outbound> Session::stop_recording() {
  if (!writer_) return std::nullopt;
  json done = {{"type", "record"}, {"status", "stopped"}, {"name", recording_name_}};
  try {
    const EpisodeManifest m = writer_->close();
    done["records"] = m.record_count;
    done["path"] = writer_->dir().string();
  } catch (const std::exception& e) {
    done["error"] = e.what();
  }
  writer_.reset();
  recording_name_.clear();
  return Outbound{done, true};
}

void Session::disconnect(ClientId client) {
  clients_.erase(client);
  if (operator_ && *operator_ == client) operator_.reset();
}

std::vector<Outbound> Session::tick(double t_ms) {
  std::vector<Outbound> out;
  if (!std::isfinite(t_ms) || (last_tick_ms_ && t_ms < *last_tick_ms_)) return out;
  const double dt = last_tick_ms_ ? t_ms - *last_tick_ms_ : 0.0;
  last_tick_ms_ = t_ms;

  if (zoom_velocity_ != 0.0 && dt > 0.0) {
    const CameraState next = zoom_rate(camera_, zoom_velocity_, dt);
    if (next.zoom != camera_.zoom) {
      camera_ = next;
      out.push_back(state_out());
    }
  }

  if (frame_gate_.admit(t_ms) != Admission::accepted) return out;

  const ImageFrame frame = render_frame(*scene_, camera_, opts_.out_size);
  const std::vector<std::uint8_t> png = encode_png(frame, opts_.png_level);
  out.push_back({{{"type", "frame"},
                  {"seq", frame_seq_++},
                  {"encoding", "png_b64"},
                  {"data", base64_encode(png)}},
                 true});

  const auto rec_t = static_cast<std::int64_t>(std::llround(t_ms));
  if (writer_ && (!last_record_t_ms_ || rec_t > *last_record_t_ms_)) {
    EpisodeRecord r;
    r.t_ms = rec_t;
    r.gimbal_pitch = static_cast<float>(camera_.tilt);
    r.gimbal_yaw = static_cast<float>(camera_.pan);
    r.zoom = static_cast<float>(camera_.zoom);
    r.focal_mm = static_cast<float>(camera_.focal_mm);
    r.zoom_affine = zoom_matrix(camera_.zoom, opts_.out_size);
    r.frames["top"] = frame_ref("top", writer_->count());
    try {
      writer_->write_frame_bytes(r.frames["top"], png);
      writer_->append_record(r);
      last_record_t_ms_ = rec_t;
    } catch (const std::exception& e) {
      out.push_back({error_message("io_error", std::string("recording stopped: ") + e.what()), true});
      if (auto done = stop_recording()) out.push_back(*done);
    }
  }
  return out;
}

}  // namespace avr
