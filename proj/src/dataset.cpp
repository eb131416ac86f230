#include "avr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "avr/errors.hpp"

namespace avr {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

template <std::size_t N>
std::string fmt_array(const std::array<float, N>& a) {
  std::string s = "[";
  for (std::size_t i = 0; i < N; ++i) {
    if (i) s += ',';
    s += fmt_float(a[i]);
  }
  return s + "]";
}

std::string quoted(const std::string& s) { return json(s).dump(); }

[[noreturn]] void field_error(std::size_t index, const std::string& field, const std::string& why) {
  throw ValidationError(index, field,
                        "record " + std::to_string(index) + ": field '" + field + "' " + why);
}

const json& require(const json& j, const char* key, std::size_t index) {
  if (!j.contains(key)) field_error(index, key, "is missing");
  return j.at(key);
}

float get_float(const json& j, const char* key, std::size_t index) {
  const json& v = require(j, key, index);
  if (!v.is_number()) field_error(index, key, "is not a number");
  return static_cast<float>(v.get<double>());
}

template <std::size_t N>
std::array<float, N> get_floats(const json& j, const char* key, std::size_t index) {
  const json& v = require(j, key, index);
  if (!v.is_array() || v.size() != N) {
    field_error(index, key, "must be an array of " + std::to_string(N) + " numbers");
  }
  std::array<float, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!v[i].is_number()) field_error(index, key, "must contain numbers only");
    out[i] = static_cast<float>(v[i].get<double>());
  }
  return out;
}

bool in_range(float v, float lo, float hi) { return v >= lo && v <= hi; }

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw NotFoundError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + p.string() + "' for writing");
  os << text;
  if (!os) throw IoError("write failed for '" + p.string() + "'");
}

}  // namespace

const std::vector<std::string>& known_views() {
  static const std::vector<std::string> views{"top", "left", "front"};
  return views;
}

void EpisodeManifest::validate() const {
  if (schema != kEpisodeSchema) {
    throw ValidationError(ValidationError::npos, "schema", "unsupported schema '" + schema + "'");
  }
  if (!frame_size.valid()) {
    throw ValidationError(ValidationError::npos, "frame_size", "frame size must be >= 2x2");
  }
  std::set<std::string> seen;
  for (const auto& v : layout) {
    if (std::find(known_views().begin(), known_views().end(), v) == known_views().end()) {
      throw ValidationError(ValidationError::npos, "layout", "unknown camera view '" + v + "'");
    }
    if (!seen.insert(v).second) {
      throw ValidationError(ValidationError::npos, "layout", "duplicate camera view '" + v + "'");
    }
  }
  if (!(frame_rate_hz > 0.0)) {
    throw ValidationError(ValidationError::npos, "frame_rate_hz", "frame rate must be positive");
  }
  if (!frame_format.valid()) {
    throw ValidationError(ValidationError::npos, "frame_format", "invalid frame format");
  }
}

json manifest_to_json(const EpisodeManifest& m) {
  json j;
  j["schema"] = m.schema;
  j["name"] = m.name;
  j["frame_rate_hz"] = m.frame_rate_hz;
  j["frame_size"] = {m.frame_size.width, m.frame_size.height};
  j["layout"] = m.layout;
  j["record_count"] = m.record_count;
  j["arms_present"] = m.arms_present;
  json meta = json::array();
  for (const auto& [k, v] : m.frame_format.metadata) meta.push_back({k, v});
  j["frame_format"] = {{"bit_depth", m.frame_format.bit_depth},
                       {"color_space", to_string(m.frame_format.color_space)},
                       {"channels", m.frame_channels},
                       {"metadata", meta}};
  if (!m.processing.is_null()) j["processing"] = m.processing;
  return j;
}

EpisodeManifest manifest_from_json(const json& j) {
  EpisodeManifest m;
  try {
    m.schema = j.at("schema").get<std::string>();
    m.name = j.at("name").get<std::string>();
    m.frame_rate_hz = j.at("frame_rate_hz").get<double>();
    const auto size = j.at("frame_size").get<std::vector<int>>();
    if (size.size() != 2) throw ValidationError(ValidationError::npos, "frame_size", "bad size");
    m.frame_size = {size[0], size[1]};
    m.layout = j.at("layout").get<std::vector<std::string>>();
    m.record_count = j.at("record_count").get<std::size_t>();
    m.arms_present = j.value("arms_present", false);
    if (j.contains("frame_format")) {
      const json& f = j.at("frame_format");
      m.frame_format.bit_depth = f.at("bit_depth").get<int>();
      m.frame_format.color_space = color_space_from_string(f.at("color_space").get<std::string>());
      m.frame_channels = f.value("channels", 3);
      m.frame_format.metadata.clear();
      for (const auto& kv : f.at("metadata")) {
        m.frame_format.metadata.emplace_back(kv.at(0).get<std::string>(),
                                             kv.at(1).get<std::string>());
      }
    }
    if (j.contains("processing")) m.processing = j.at("processing");
  } catch (const json::exception& e) {
    throw ValidationError(ValidationError::npos, "manifest",
                          std::string("malformed manifest: ") + e.what());
  } catch (const DomainError& e) {
    throw ValidationError(ValidationError::npos, "manifest", e.what());
  }
  m.validate();
  return m;
}

std::string frame_ref(const std::string& view, std::size_t seq) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "frames/%s_%06zu.png", view.c_str(), seq);
  return buf;
}

std::string depth_ref(std::size_t seq) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "depth/%06zu.png", seq);
  return buf;
}

void validate_record(const EpisodeRecord& r, std::size_t index, const EpisodeRecord* previous) {
  if (previous && r.t_ms <= previous->t_ms) field_error(index, "t_ms", "is not strictly increasing");
  for (float v : r.left_joints) {
    if (!std::isfinite(v)) field_error(index, "left_joints", "must be finite");
  }
  for (float v : r.right_joints) {
    if (!std::isfinite(v)) field_error(index, "right_joints", "must be finite");
  }
  if (!in_range(r.left_grip, 0.0f, 1.0f)) field_error(index, "left_grip", "outside [0, 1]");
  if (!in_range(r.right_grip, 0.0f, 1.0f)) field_error(index, "right_grip", "outside [0, 1]");
  if (!in_range(r.gimbal_pitch, 0.0f, 60.0f)) field_error(index, "gimbal_pitch", "outside [0, 60]");
  if (!in_range(r.gimbal_yaw, -90.0f, 90.0f)) field_error(index, "gimbal_yaw", "outside [-90, 90]");
  if (!in_range(r.zoom, 1.0f, 7.0f)) field_error(index, "zoom", "outside [1, 7]");
}

void validate_records(std::span<const EpisodeRecord> records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    validate_record(records[i], i, i ? &records[i - 1] : nullptr);
  }
}

std::string record_to_json_line(const EpisodeRecord& r) {
  std::string s = "{\"t_ms\":" + std::to_string(r.t_ms);
  s += ",\"left_joints\":" + fmt_array(r.left_joints);
  s += ",\"right_joints\":" + fmt_array(r.right_joints);
  s += ",\"left_grip\":" + fmt_float(r.left_grip);
  s += ",\"right_grip\":" + fmt_float(r.right_grip);
  s += ",\"gimbal_pitch\":" + fmt_float(r.gimbal_pitch);
  s += ",\"gimbal_yaw\":" + fmt_float(r.gimbal_yaw);
  s += ",\"zoom\":" + fmt_float(r.zoom);
  s += ",\"focal_mm\":" + fmt_float(r.focal_mm);
  s += ",\"zoom_affine\":" + fmt_array(r.zoom_affine);
  s += ",\"frames\":{";
  bool first = true;
  for (const auto& [view, ref] : r.frames) {
    if (!first) s += ',';
    first = false;
    s += quoted(view) + ":" + quoted(ref);
  }
  s += "}";
  if (r.depth) s += ",\"depth\":" + quoted(*r.depth);
  if (r.processing) {
    const ProcessingInfo& p = *r.processing;
    s += ",\"proc\":{\"hit\":";
    s += p.hit ? "true" : "false";
    s += ",\"scale\":" + fmt_float(p.scale);
    s += ",\"affine\":" + fmt_array(p.affine);
    s += ",\"label\":" + quoted(p.label);
    s += ",\"error\":" + quoted(p.error);
    s += ",\"guard_ones_fraction\":" + fmt_float(p.guard_ones_fraction);
    s += ",\"guard_corrected\":";
    s += p.guard_corrected ? "true" : "false";
    s += "}";
  }
  s += "}";
  return s;
}

EpisodeRecord record_from_json_line(const std::string& line, std::size_t index) {
  const json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) field_error(index, "line", "is not a JSON object");
  EpisodeRecord r;
  const json& t = require(j, "t_ms", index);
  if (!t.is_number_integer()) field_error(index, "t_ms", "must be an integer");
  r.t_ms = t.get<std::int64_t>();
  r.left_joints = get_floats<6>(j, "left_joints", index);
  r.right_joints = get_floats<6>(j, "right_joints", index);
  r.left_grip = get_float(j, "left_grip", index);
  r.right_grip = get_float(j, "right_grip", index);
  r.gimbal_pitch = get_float(j, "gimbal_pitch", index);
  r.gimbal_yaw = get_float(j, "gimbal_yaw", index);
  r.zoom = get_float(j, "zoom", index);
  r.focal_mm = get_float(j, "focal_mm", index);
  r.zoom_affine = get_floats<9>(j, "zoom_affine", index);
  const json& frames = require(j, "frames", index);
  if (!frames.is_object()) field_error(index, "frames", "must be an object");
  for (const auto& [view, ref] : frames.items()) {
    if (!ref.is_string()) field_error(index, "frames", "refs must be strings");
    r.frames[view] = ref.get<std::string>();
  }
  if (j.contains("depth")) {
    if (!j["depth"].is_string()) field_error(index, "depth", "must be a string");
    r.depth = j["depth"].get<std::string>();
  }
  if (j.contains("proc")) {
    const json& p = j["proc"];
    if (!p.is_object()) field_error(index, "proc", "must be an object");
    ProcessingInfo info;
    info.hit = p.value("hit", false);
    info.scale = get_float(p, "scale", index);
    info.affine = get_floats<9>(p, "affine", index);
    info.label = p.value("label", "");
    info.error = p.value("error", "");
    info.guard_ones_fraction = get_float(p, "guard_ones_fraction", index);
    info.guard_corrected = p.value("guard_corrected", false);
    r.processing = info;
  }
  return r;
}

ImageFrame FrameLoader::load(const EpisodeRecord& r, const std::string& view) const {
  const auto it = r.frames.find(view);
  if (it == r.frames.end()) throw NotFoundError("record has no '" + view + "' frame");
  return load_ref(it->second);
}

ImageFrame FrameLoader::load_ref(const std::string& ref) const { return read_png(root_ / ref); }

Episode read_episode(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::is_regular_file(manifest_path)) {
    throw NotFoundError("no episode manifest in '" + dir.string() + "'");
  }
  const json mj = json::parse(read_text(manifest_path), nullptr, false);
  if (mj.is_discarded()) {
    throw ValidationError(ValidationError::npos, "manifest", "manifest.json is not valid JSON");
  }
  Episode ep;
  ep.manifest = manifest_from_json(mj);
  ep.frames = FrameLoader(dir);

  const fs::path streams = dir / "streams.jsonl";
  if (!fs::is_regular_file(streams)) {
    throw NotFoundError("no streams.jsonl in '" + dir.string() + "'");
  }
  std::ifstream is(streams);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::size_t index = ep.records.size();
    EpisodeRecord r = record_from_json_line(line, index);
    validate_record(r, index, index ? &ep.records.back() : nullptr);
    for (const auto& [view, ref] : r.frames) {
      if (std::find(ep.manifest.layout.begin(), ep.manifest.layout.end(), view) ==
          ep.manifest.layout.end()) {
        field_error(index, "frames", "references view '" + view + "' outside the layout");
      }
    }
    ep.records.push_back(std::move(r));
  }
  if (ep.records.size() != ep.manifest.record_count) {
    throw ValidationError(ValidationError::npos, "record_count",
                          "manifest declares " + std::to_string(ep.manifest.record_count) +
                              " records, stream holds " + std::to_string(ep.records.size()));
  }
  return ep;
}

EpisodeWriter::EpisodeWriter(fs::path dir, EpisodeManifest manifest)
    : dir_(std::move(dir)), manifest_(std::move(manifest)) {
  manifest_.validate();
  std::error_code ec;
  fs::create_directories(dir_ / "frames", ec);
  if (ec) throw IoError("cannot create '" + dir_.string() + "': " + ec.message());
  fs::remove(dir_ / "manifest.json", ec);
  stream_ = std::fopen((dir_ / "streams.jsonl").c_str(), "wb");
  if (!stream_) throw IoError("cannot open '" + (dir_ / "streams.jsonl").string() + "'");
}

EpisodeWriter::~EpisodeWriter() {
  try {
    if (!closed_) close();
  } catch (...) {
  }
}

void EpisodeWriter::append_line(const EpisodeRecord& r) {
  validate_record(r, count_, last_ ? &*last_ : nullptr);
  for (const auto& [view, ref] : r.frames) {
    if (std::find(manifest_.layout.begin(), manifest_.layout.end(), view) ==
        manifest_.layout.end()) {
      field_error(count_, "frames", "references view '" + view + "' outside the layout");
    }
  }
  const std::string line = record_to_json_line(r) + "\n";
  if (std::fwrite(line.data(), 1, line.size(), stream_) != line.size()) {
    throw IoError("write failed for streams.jsonl");
  }
  last_ = r;
  ++count_;
}

void EpisodeWriter::append(const EpisodeRecord& r, const std::map<std::string, ImageFrame>& frames,
                           const ImageFrame* depth) {
  if (closed_) throw IoError("episode writer already closed");
  validate_record(r, count_, last_ ? &*last_ : nullptr);
  for (const auto& [view, ref] : r.frames) {
    const auto it = frames.find(view);
    if (it == frames.end()) field_error(count_, "frames", "has no image for view '" + view + "'");
    if (it->second.size() != manifest_.frame_size) {
      field_error(count_, "frames", "image size disagrees with the manifest");
    }
    const fs::path p = dir_ / ref;
    fs::create_directories(p.parent_path());
    write_png(it->second, p);
  }
  if (r.depth) {
    if (!depth) field_error(count_, "depth", "is referenced but no depth image was given");
    const fs::path p = dir_ / *r.depth;
    fs::create_directories(p.parent_path());
    write_png(*depth, p);
  }
  append_line(r);
}

void EpisodeWriter::append_record(const EpisodeRecord& r) {
  if (closed_) throw IoError("episode writer already closed");
  append_line(r);
}

void EpisodeWriter::write_frame_bytes(const std::string& ref, std::span<const std::uint8_t> png) {
  const fs::path p = dir_ / ref;
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + p.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  if (!os) throw IoError("write failed for '" + p.string() + "'");
}

EpisodeManifest EpisodeWriter::close() {
  if (closed_) return manifest_;
  closed_ = true;
  if (stream_) {
    std::fclose(stream_);
    stream_ = nullptr;
  }
  manifest_.record_count = count_;
  write_text(dir_ / "manifest.json", manifest_to_json(manifest_).dump(2) + "\n");
  return manifest_;
}

EpisodeManifest write_episode(const fs::path& dir, EpisodeManifest manifest,
                              std::span<const EpisodeRecord> records,
                              const std::vector<std::map<std::string, ImageFrame>>& frames) {
  manifest.validate();
  validate_records(records);
  if (!frames.empty() && frames.size() != records.size()) {
    throw ValidationError(ValidationError::npos, "frames", "one frame set per record expected");
  }
  EpisodeWriter writer(dir, std::move(manifest));
  static const std::map<std::string, ImageFrame> kNoFrames;
  for (std::size_t i = 0; i < records.size(); ++i) {
    writer.append(records[i], frames.empty() ? kNoFrames : frames[i]);
  }
  return writer.close();
}

json aggregate(const std::vector<fs::path>& episodes, const fs::path& out_dir) {
  std::vector<Episode> loaded;
  loaded.reserve(episodes.size());
  for (const auto& p : episodes) loaded.push_back(read_episode(p));

  if (!loaded.empty()) {
    const EpisodeManifest& ref = loaded.front().manifest;
    std::vector<std::string> offenders;
    for (std::size_t i = 1; i < loaded.size(); ++i) {
      const EpisodeManifest& m = loaded[i].manifest;
      if (m.frame_size != ref.frame_size || m.schema != ref.schema) {
        offenders.push_back(m.name.empty() ? episodes[i].string() : m.name);
      }
    }
    if (!offenders.empty()) {
      offenders.insert(offenders.begin(), ref.name.empty() ? episodes[0].string() : ref.name);
      std::string msg = "incompatible episodes (frame size or schema):";
      for (const auto& o : offenders) msg += " " + o;
      throw AggregationError(offenders, msg);
    }
  }

  std::map<int, std::size_t> bins;
  double pitch_min = INFINITY, pitch_max = -INFINITY, yaw_min = INFINITY, yaw_max = -INFINITY;
  std::size_t total = 0;
  json entries = json::array();
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    entries.push_back({{"path", fs::absolute(episodes[i]).lexically_normal().string()},
                       {"manifest", manifest_to_json(loaded[i].manifest)}});
    for (const auto& r : loaded[i].records) {
      const int top_bin = static_cast<int>(std::round((7.0 - 1.0) / kZoomHistogramBin)) - 1;
      const int bin = std::min(static_cast<int>(std::floor((r.zoom - 1.0) / kZoomHistogramBin)),
                               top_bin);
      ++bins[bin];
      pitch_min = std::min(pitch_min, static_cast<double>(r.gimbal_pitch));
      pitch_max = std::max(pitch_max, static_cast<double>(r.gimbal_pitch));
      yaw_min = std::min(yaw_min, static_cast<double>(r.gimbal_yaw));
      yaw_max = std::max(yaw_max, static_cast<double>(r.gimbal_yaw));
      ++total;
    }
  }
  json hist = json::array();
  for (const auto& [bin, count] : bins) {
    hist.push_back({{"lo", 1.0 + bin * kZoomHistogramBin},
                    {"hi", 1.0 + (bin + 1) * kZoomHistogramBin},
                    {"count", count}});
  }
  json index;
  index["schema"] = kIndexSchema;
  index["episodes"] = entries;
  index["stats"] = {{"episodes", loaded.size()},
                    {"records", total},
                    {"zoom_histogram", {{"bin_width", kZoomHistogramBin}, {"bins", hist}}}};
  if (total > 0) {
    index["stats"]["gimbal_coverage"] = {{"pitch", {pitch_min, pitch_max}},
                                         {"yaw", {yaw_min, yaw_max}}};
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  write_text(out_dir / "index.json", index.dump(2) + "\n");
  return index;
}

}  // namespace avr
