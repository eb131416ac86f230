// avr: batch and service entry points.
//
//   avr synth     --seed N --frames N --targets N --out DIR
//   avr process   --input DIR --output DIR [--smax --alpha --sr --miss-policy --task ...]
//   avr verify    --episode DIR
//   avr serve     --port N --size WxH --seed N
//   avr sr-weights --seed N --out FILE
//   avr aggregate --out DIR EPISODE...
//
// Summaries go to stdout as JSON, logs to stderr. Exit codes: 0 success,
// 1 validation failure, 2 usage or I/O error.

#include <CLI11.hpp>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <regex>
#include <sstream>

#include "avr/dataset.hpp"
#include "avr/errors.hpp"
#include "avr/format_guard.hpp"
#include "avr/pipeline.hpp"
#include "avr/synth.hpp"
#include "avr/teleop_server.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitUsage = 2;

void log(const std::string& msg) { std::fprintf(stderr, "avr: %s\n", msg.c_str()); }

/// JSON config files: {"<subcommand>": {"<long flag name>": value, ...}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    const json j = json::parse(input, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static void collect(const json& j, std::vector<std::string> parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        collect(value, p, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }

  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }
};

avr::FrameSize parse_size(const std::string& s) {
  static const std::regex re(R"((\d{1,5})x(\d{1,5}))");
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw CLI::ValidationError("--size", "expected WxH, got '" + s + "'");
  return {std::stoi(m[1]), std::stoi(m[2])};
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

json validation_json(const avr::ValidationError& e) {
  json j{{"valid", false}, {"error", e.what()}, {"field", e.field()}};
  if (e.index() != avr::ValidationError::npos) j["index"] = e.index();
  return j;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::uint64_t seed = 1;
  std::size_t frames = 20;
  int targets = 3;
  std::string out;
  std::string size = "640x360";
  std::string views = "top";
  double zoom = 1.0;
};

int run_synth(const SynthArgs& a) {
  avr::SynthOptions o;
  o.seed = a.seed;
  o.frames = a.frames;
  o.targets = a.targets;
  o.size = parse_size(a.size);
  o.views = split_csv(a.views);
  o.zoom = a.zoom;
  const auto res = avr::synthesize_episode(a.out, o);
  json j = avr::manifest_to_json(res.manifest);
  j["path"] = a.out;
  j["targets"] = res.scene.describe()["targets"];
  print(j);
  return kExitOk;
}

// ---------------------------------------------------------------- process

struct ProcessArgs {
  std::string input;
  std::string output;
  double smax = 7.0;
  double alpha = 1.2;
  std::string sr = "bicubic";
  std::string miss = "passthrough";
  std::string task;
  std::string weights;
  int sr_factor = 2;
  std::string view = "top";
  std::string detector_url;
  int detector_timeout_ms = 2000;
};

int run_process(const ProcessArgs& a) {
  avr::PipelineConfig cfg;
  cfg.zoom.s_max = a.smax;
  cfg.zoom.alpha = a.alpha;
  cfg.sr = avr::sr_mode_from_string(a.sr);
  cfg.miss = avr::miss_policy_from_string(a.miss);
  cfg.task_label = a.task;
  cfg.sr_factor = a.sr_factor;
  cfg.view = a.view;
  if (!a.detector_url.empty()) {
    cfg.detector = avr::DetectorConfig::remote_endpoint(a.detector_url, a.detector_timeout_ms);
  }
  std::optional<avr::sr::SRNetwork> net;
  if (!a.weights.empty()) net = avr::sr::load_weights(a.weights);
  if (cfg.sr == avr::SrMode::network && !net) {
    throw CLI::ValidationError("--sr", "network mode needs --weights");
  }
  if (!fs::exists(fs::path(a.input) / "manifest.json")) {
    throw avr::NotFoundError("no episode at '" + a.input + "'");
  }
  const avr::Pipeline pipeline(cfg, net);
  log("processing " + a.input + " -> " + a.output);
  const avr::EpisodeSummary s = pipeline.process_episode(a.input, a.output);
  print(s.to_json());
  return kExitOk;
}

// ---------------------------------------------------------------- verify

int run_verify(const std::string& dir) {
  avr::Episode ep;
  try {
    ep = avr::read_episode(dir);
  } catch (const avr::ValidationError& e) {
    json j = validation_json(e);
    j["episode"] = dir;
    print(j);
    return kExitInvalid;
  }
  const auto& m = ep.manifest;
  json failing = json::array();
  std::size_t checked = 0;
  double min_ones = 1.0;
  for (std::size_t i = 0; i < ep.records.size(); ++i) {
    for (const auto& [view, ref] : ep.records[i].frames) {
      const avr::ImageFrame f = ep.frames.load_ref(ref);
      ++checked;
      if (f.size() != m.frame_size) {
        failing.push_back({{"index", i}, {"view", view}, {"error", "frame size differs from manifest"}});
        min_ones = 0.0;
        continue;
      }
      const avr::GuardReport r = avr::verify_format(f, m.frame_format, m.frame_channels);
      min_ones = std::min(min_ones, r.ones_fraction);
      if (r.ones_fraction < 1.0) {
        json preds = json::array();
        for (auto p : r.failing) preds.push_back(avr::to_string(p));
        failing.push_back({{"index", i}, {"view", view}, {"ones_fraction", r.ones_fraction},
                           {"predicates", preds}});
      }
    }
  }
  const bool ok = failing.empty();
  print({{"episode", dir},
         {"valid", ok},
         {"records", ep.records.size()},
         {"frames_checked", checked},
         {"min_ones_fraction", min_ones},
         {"failing", failing}});
  return ok ? kExitOk : kExitInvalid;
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;
  std::string size = "640x360";
  std::uint64_t seed = 1;
  int targets = 3;
  std::string record_dir = "recordings";
};

int run_serve(const ServeArgs& a) {
  avr::SceneOptions so;
  so.out_size = parse_size(a.size);
  auto scene = std::make_shared<avr::WorldScene>(avr::make_scene(a.seed, a.targets, so));
  avr::ServerOptions opts;
  opts.host = a.host;
  opts.port = a.port;
  opts.session.out_size = so.out_size;
  opts.session.record_root = a.record_dir;
  opts.session.initial.tilt = 30.0;
  opts.handle_signals = true;
  avr::TeleopServer server(scene, opts);
  log("listening on ws://" + a.host + ":" + std::to_string(server.port()) + "/session");
  print({{"host", a.host}, {"port", server.port()}, {"endpoint", "/session"}});
  server.run();
  log("stopped");
  return kExitOk;
}

// ---------------------------------------------------------------- sr-weights

struct WeightsArgs {
  std::uint64_t seed = 1;
  std::string out;
  int channels = 32;
  int heads = 4;
  int window = 8;
  int blocks = 2;
  int scale = 2;
};

int run_weights(const WeightsArgs& a) {
  avr::sr::SRConfig c;
  c.seed = a.seed;
  c.channels = a.channels;
  c.heads = a.heads;
  c.window = a.window;
  c.blocks = a.blocks;
  c.scale = a.scale;
  const auto net = avr::sr::SRNetwork::seeded(c);
  avr::sr::save_weights(net, a.out);
  print({{"path", a.out}, {"seed", a.seed}, {"channels", c.channels}, {"heads", c.heads},
         {"window", c.window}, {"blocks", c.blocks}, {"scale", c.scale}});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"active-vision episode tooling and live camera service", "avr"};
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file with per-subcommand defaults; flags win");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "render a synthetic episode");
  c_synth->add_option("--seed", synth.seed, "scene and trajectory seed");
  c_synth->add_option("--frames", synth.frames, "record count");
  c_synth->add_option("--targets", synth.targets, "target count")->check(CLI::Range(1, 6));
  c_synth->add_option("--out", synth.out, "episode directory")->required();
  c_synth->add_option("--size", synth.size, "frame size WxH");
  c_synth->add_option("--views", synth.views, "comma-separated views (top,left,front)");
  c_synth->add_option("--zoom", synth.zoom, "camera zoom")->check(CLI::Range(1.0, 7.0));

  ProcessArgs proc;
  auto* c_proc = app.add_subcommand("process", "run the active-vision pipeline over an episode");
  c_proc->add_option("--input", proc.input, "input episode")->required();
  c_proc->add_option("--output", proc.output, "output episode")->required();
  c_proc->add_option("--smax", proc.smax, "maximum scale factor");
  c_proc->add_option("--alpha", proc.alpha, "context margin around the target");
  c_proc->add_option("--sr", proc.sr, "network | bicubic | none");
  c_proc->add_option("--miss-policy", proc.miss, "hold_last | passthrough");
  c_proc->add_option("--task", proc.task, "target label; empty accepts any");
  c_proc->add_option("--weights", proc.weights, "SR weights file");
  c_proc->add_option("--sr-factor", proc.sr_factor, "bicubic upscale cap");
  c_proc->add_option("--view", proc.view, "view to process");
  c_proc->add_option("--detector-url", proc.detector_url, "remote detector endpoint");
  c_proc->add_option("--detector-timeout-ms", proc.detector_timeout_ms, "remote detector timeout");

  std::string verify_dir;
  auto* c_verify = app.add_subcommand("verify", "validate an episode and re-scan frame formats");
  c_verify->add_option("--episode", verify_dir, "episode directory")->required();

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve", "live camera session over WebSocket");
  c_serve->add_option("--host", serve.host, "bind address");
  c_serve->add_option("--port", serve.port, "port (0 picks one)");
  c_serve->add_option("--size", serve.size, "frame size WxH");
  c_serve->add_option("--seed", serve.seed, "scene seed");
  c_serve->add_option("--targets", serve.targets, "target count")->check(CLI::Range(0, 6));
  c_serve->add_option("--record-dir", serve.record_dir, "where recordings are written");

  WeightsArgs weights;
  auto* c_weights = app.add_subcommand("sr-weights", "write seeded SR network weights");
  c_weights->add_option("--seed", weights.seed, "weight seed");
  c_weights->add_option("--out", weights.out, "weights file")->required();
  c_weights->add_option("--channels", weights.channels, "feature channels");
  c_weights->add_option("--heads", weights.heads, "attention heads");
  c_weights->add_option("--window", weights.window, "window side");
  c_weights->add_option("--blocks", weights.blocks, "transformer blocks");
  c_weights->add_option("--scale", weights.scale, "upsampling factor (2-4)");

  std::string agg_out;
  std::vector<std::string> agg_in;
  auto* c_agg = app.add_subcommand("aggregate", "check episodes agree and write index.json");
  c_agg->add_option("--out", agg_out, "index directory")->required();
  c_agg->add_option("episodes", agg_in, "episode directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*c_synth) return run_synth(synth);
    if (*c_proc) return run_process(proc);
    if (*c_verify) return run_verify(verify_dir);
    if (*c_serve) return run_serve(serve);
    if (*c_weights) return run_weights(weights);
    if (*c_agg) {
      std::vector<fs::path> paths(agg_in.begin(), agg_in.end());
      print(avr::aggregate(paths, agg_out));
      return kExitOk;
    }
  } catch (const CLI::ParseError& e) {
    log(e.what());
    return kExitUsage;
  } catch (const avr::ValidationError& e) {
    print(validation_json(e));
    log(e.what());
    return kExitInvalid;
  } catch (const avr::AggregationError& e) {
    print({{"valid", false}, {"error", e.what()}, {"offenders", e.offenders()}});
    log(e.what());
    return kExitInvalid;
  } catch (const avr::DomainError& e) {
    log(e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log(e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
