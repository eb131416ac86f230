#include "avr/detection.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <regex>

#include "avr/errors.hpp"

namespace avr {

namespace {

using json = nlohmann::json;

struct Component {
  std::int64_t area = 0;
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

std::vector<Component> label_components(const std::vector<std::uint8_t>& mask, int w, int h) {
  std::vector<Component> out;
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t start = static_cast<std::size_t>(y) * w + x;
      if (!mask[start] || seen[start]) continue;
      Component comp{0, x, y, x, y};
      seen[start] = 1;
      stack.assign(1, static_cast<int>(start));
      while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const int cx = idx % w;
        const int cy = idx / w;
        ++comp.area;
        comp.x_min = std::min(comp.x_min, cx);
        comp.x_max = std::max(comp.x_max, cx);
        comp.y_min = std::min(comp.y_min, cy);
        comp.y_max = std::max(comp.y_max, cy);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx;
            const int ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
            if (mask[n] && !seen[n]) {
              seen[n] = 1;
              stack.push_back(static_cast<int>(n));
            }
          }
        }
      }
      out.push_back(comp);
    }
  }
  return out;
}

double box_area(const BoundingBox& b) {
  return (b.x_max - b.x_min + 1.0) * (b.y_max - b.y_min + 1.0);
}

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw DomainError("bad detector endpoint '" + url + "'");
  return {m[1].str(), m[2].matched ? m[2].str() : std::string("/")};
}

}  // namespace

DetectorConfig DetectorConfig::palette() {
  DetectorConfig cfg;
  cfg.mode = Mode::reference_blob;
  cfg.classes = {
      {"red", {170, 0, 0}, {255, 100, 100}},
      {"green", {0, 150, 0}, {100, 255, 120}},
      {"blue", {0, 0, 170}, {100, 120, 255}},
      {"yellow", {170, 160, 0}, {255, 255, 100}},
      {"magenta", {160, 0, 150}, {255, 100, 255}},
      {"cyan", {0, 150, 160}, {100, 255, 255}},
  };
  return cfg;
}

DetectorConfig DetectorConfig::remote_endpoint(std::string url, int timeout_ms) {
  DetectorConfig cfg;
  cfg.mode = Mode::remote;
  cfg.endpoint = std::move(url);
  cfg.timeout_ms = timeout_ms;
  return cfg;
}

void DetectorConfig::validate() const {
  if (timeout_ms <= 0) throw DomainError("detector timeout must be positive");
  if (mode == Mode::remote) {
    if (endpoint.empty()) throw DomainError("remote detector needs an endpoint");
    parse_url(endpoint);
  } else {
    for (const auto& c : classes) {
      for (int i = 0; i < 3; ++i) {
        if (c.min[i] > c.max[i]) throw DomainError("colour class '" + c.label + "' is empty");
      }
    }
  }
}

std::vector<Detection> detect_blobs(const ImageFrame& frame, const DetectorConfig& cfg) {
  if (cfg.mode != DetectorConfig::Mode::reference_blob) {
    throw DomainError("detect_blobs requires reference mode");
  }
  if (frame.channels() < 3) throw DomainError("detect_blobs requires a 3-channel frame");
  const int w = frame.width();
  const int h = frame.height();
  const int ch = frame.channels();
  const int shift = frame.format().bit_depth == 16 ? 8 : 0;

  std::vector<Detection> dets;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * h);
  for (const ColorClass& cls : cfg.classes) {
    for (int y = 0; y < h; ++y) {
      const auto row = frame.row(y);
      for (int x = 0; x < w; ++x) {
        const std::uint16_t* px = row.data() + static_cast<std::size_t>(x) * ch;
        const std::uint16_t rgb[3] = {static_cast<std::uint16_t>(px[0] >> shift),
                                      static_cast<std::uint16_t>(px[1] >> shift),
                                      static_cast<std::uint16_t>(px[2] >> shift)};
        mask[static_cast<std::size_t>(y) * w + x] = cls.matches(rgb) ? 1 : 0;
      }
    }
    for (const Component& comp : label_components(mask, w, h)) {
      if (comp.area < kMinComponentArea) continue;
      Detection d;
      d.box = {static_cast<double>(comp.x_min), static_cast<double>(comp.y_min),
               static_cast<double>(comp.x_max), static_cast<double>(comp.y_max)};
      d.label = cls.label;
      d.area = comp.area;
      d.score = static_cast<double>(comp.area) / box_area(d.box);
      dets.push_back(std::move(d));
    }
  }
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.area != b.area) return a.area > b.area;
    if (a.box.y_min != b.box.y_min) return a.box.y_min < b.box.y_min;
    return a.box.x_min < b.box.x_min;
  });
  return dets;
}

std::optional<Detection> select_target(const std::vector<Detection>& dets,
                                       const std::string& task_label) {
  const Detection* best = nullptr;
  for (const Detection& d : dets) {
    if (!task_label.empty() && d.label != task_label) continue;
    if (!best) {
      best = &d;
      continue;
    }
    if (d.score != best->score) {
      if (d.score > best->score) best = &d;
      continue;
    }
    const double da = box_area(d.box);
    const double ba = box_area(best->box);
    if (da != ba) {
      if (da > ba) best = &d;
      continue;
    }
    if (d.box.x_min < best->box.x_min) best = &d;
  }
  if (!best) return std::nullopt;
  return *best;
}

std::vector<Detection> parse_detection_response(const std::string& body, FrameSize frame) {
  const json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("detections") ||
      !doc["detections"].is_array()) {
    throw TransportError("malformed", "detector response is not a detections object");
  }
  std::vector<Detection> out;
  std::size_t i = 0;
  for (const json& item : doc["detections"]) {
    if (!item.is_object() || !item.contains("box") || !item["box"].is_array() ||
        item["box"].size() != 4 || !item.contains("score") || !item["score"].is_number()) {
      throw TransportError("malformed", "detection " + std::to_string(i) + " is malformed");
    }
    Detection d;
    std::array<double, 4> b{};
    for (int k = 0; k < 4; ++k) {
      if (!item["box"][k].is_number()) {
        throw TransportError("malformed", "detection box entries must be numbers");
      }
      b[k] = item["box"][k].get<double>();
    }
    d.box = {b[0], b[1], b[2], b[3]};
    if (!d.box.valid()) {
      throw ValidationError(i, "box", "detection " + std::to_string(i) + " has an invalid box");
    }
    d.score = item["score"].get<double>();
    if (!(d.score >= 0.0 && d.score <= 1.0)) {
      throw ValidationError(i, "score",
                            "detection " + std::to_string(i) + " score outside [0, 1]");
    }
    if (item.contains("label") && item["label"].is_string()) {
      d.label = item["label"].get<std::string>();
    }
    const double xmax = frame.width - 1.0;
    const double ymax = frame.height - 1.0;
    d.box.x_min = std::clamp(d.box.x_min, 0.0, xmax);
    d.box.x_max = std::clamp(d.box.x_max, 0.0, xmax);
    d.box.y_min = std::clamp(d.box.y_min, 0.0, ymax);
    d.box.y_max = std::clamp(d.box.y_max, 0.0, ymax);
    out.push_back(std::move(d));
    ++i;
  }
  return out;
}

std::vector<Detection> remote_detect(const ImageFrame& frame, const DetectorConfig& cfg,
                                     const std::string& task_label) {
  if (cfg.mode != DetectorConfig::Mode::remote) {
    throw DomainError("remote_detect requires remote mode");
  }
  cfg.validate();
  const ParsedUrl url = parse_url(cfg.endpoint);
  httplib::Client cli(url.scheme_host_port);
  const auto secs = cfg.timeout_ms / 1000;
  const auto usecs = (cfg.timeout_ms % 1000) * 1000;
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);

  const auto png = encode_png(frame, 1);
  httplib::Headers headers{{"X-Task-Label", task_label}};
  auto res = cli.Post(url.path, headers, reinterpret_cast<const char*>(png.data()), png.size(),
                      "image/png");
  if (!res) {
    const auto err = res.error();
    const std::string cause =
        err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ? "timeout"
                                                                                : "connection";
    throw TransportError(cause, "detector request failed: " + httplib::to_string(err));
  }
  if (res->status != 200) {
    throw TransportError("http_status",
                         "detector returned HTTP " + std::to_string(res->status));
  }
  return parse_detection_response(res->body, frame.size());
}

std::vector<Detection> detect(const ImageFrame& frame, const DetectorConfig& cfg,
                              const std::string& task_label) {
  if (cfg.mode == DetectorConfig::Mode::remote) return remote_detect(frame, cfg, task_label);
  return detect_blobs(frame, cfg);
}

}  // namespace avr
