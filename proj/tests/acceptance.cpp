// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failing criteria.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "avr/dataset.hpp"
#include "avr/detection.hpp"
#include "avr/errors.hpp"
#include "avr/format_guard.hpp"
#include "avr/gimbal.hpp"
#include "avr/pipeline.hpp"
#include "avr/sr_network.hpp"
#include "avr/synth.hpp"
#include "avr/teleop_session.hpp"
#include "avr/virtual_camera.hpp"
#include "avr/zoom.hpp"
#include "sr_oracle.hpp"

using namespace avr;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Scratch {
 public:
  Scratch() {
    path_ = fs::temp_directory_path() /
            ("avr-acceptance-" + std::to_string(std::random_device{}() % 1000000000u));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& s) const { return path_ / s; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ImageFrame random_frame(std::mt19937_64& rng, int w, int h, FormatSpec f = {}) {
  ImageFrame out(w, h, 3, f);
  for (auto& v : out.pixels()) v = static_cast<std::uint16_t>(rng() % (f.max_value() + 1u));
  return out;
}

sr::Matrix random_matrix(std::mt19937_64& rng, int r, int c, double a) {
  std::uniform_real_distribution<double> u(-a, a);
  sr::Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

sr::SwinBlock random_block(std::mt19937_64& rng, int d, int h) {
  sr::SwinBlock b;
  for (int i = 0; i < h; ++i) {
    b.heads.push_back({random_matrix(rng, d, d / h, 1), random_matrix(rng, d, d / h, 1),
                       random_matrix(rng, d, d / h, 1), random_matrix(rng, d / h, d, 1)});
  }
  b.ln_scale = sr::RowVector::Ones(d);
  b.ln_offset = sr::RowVector::Zero(d);
  return b;
}

// Shared by the centering and format-guard criteria.
struct CenteringRun {
  bool ran = false;
  std::string error;
  std::size_t frames = 0;
  std::size_t centered = 0;
  double runtime_s = 0;
  double worst_ones = 1.0;
  std::size_t guard_ok = 0;
};

CenteringRun run_centering(const Scratch& dir) {
  CenteringRun r;
  try {
    SynthOptions so;
    so.seed = 11;
    so.frames = 200;
    synthesize_episode(dir / "center_in", so);
    PipelineConfig cfg;
    cfg.task_label = "red";
    const auto t0 = std::chrono::steady_clock::now();
    const EpisodeSummary s = Pipeline(cfg).process_episode(dir / "center_in", dir / "center_out");
    r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.frames = s.frames;

    const Episode in = read_episode(dir / "center_in");
    const Episode out = read_episode(dir / "center_out");
    const FrameSize f = out.manifest.frame_size;
    for (std::size_t i = 0; i < out.records.size(); ++i) {
      const ImageFrame o = out.frames.load(out.records[i], "top");
      const ImageFrame src = in.frames.load(in.records[i], "top");
      const auto d = select_target(detect_blobs(o, DetectorConfig::palette()), "red");
      if (d) {
        const Point2 c = bbox_center(d->box);
        if (std::hypot(c.x - f.width / 2.0, c.y - f.height / 2.0) <= 2.0) ++r.centered;
      }
      const GuardReport g = verify_frame(o, src);
      r.worst_ones = std::min(r.worst_ones, g.ones_fraction);
      if (g.ones_fraction == 1.0) ++r.guard_ok;
    }
    r.ran = true;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

Outcome centering(const CenteringRun& r) {
  if (!r.ran) return {false, "error: " + r.error};
  const double frac = r.frames ? static_cast<double>(r.centered) / r.frames : 0.0;
  return {r.frames == 200 && frac >= 0.95 && r.runtime_s < 60.0,
          fmt("%zu/%zu frames within 2 px (%.1f%%), runtime %.2f s", r.centered, r.frames,
              100 * frac, r.runtime_s)};
}

Outcome scale_law() {
  std::mt19937_64 rng(2024);
  const FrameSize f{320, 180};
  PipelineConfig cfg;
  cfg.sr = SrMode::none;
  const Pipeline pipe(cfg);
  const auto red = target_palette()[0].rgb;
  int violations = 0, capped = 0, floored = 0, tested = 0;
  for (int i = 0; i < 1000; ++i) {
    ImageFrame frame(f.width, f.height, 3);
    frame.fill(128);
    const int w = 3 + static_cast<int>(rng() % (f.width - 3));
    const int h = 3 + static_cast<int>(rng() % (f.height - 3));
    const int x0 = static_cast<int>(rng() % (f.width - w + 1));
    const int y0 = static_cast<int>(rng() % (f.height - h + 1));
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x)
        for (int c = 0; c < 3; ++c) frame.at(x, y, c) = red[static_cast<std::size_t>(c)];
    const Pipeline::Plan p = pipe.plan(frame);
    if (p.miss || !p.detection) {
      ++violations;
      continue;
    }
    ++tested;
    const double s = p.scale;
    const double bw = p.detection->box.width(), bh = p.detection->box.height();
    bool ok = s >= 1.0 && s <= cfg.zoom.s_max;
    // The fit only binds when the padded box fits the frame at all (s not raised to 1).
    const bool fits_unzoomed = cfg.zoom.alpha * bw <= f.width && cfg.zoom.alpha * bh <= f.height;
    if (!fits_unzoomed) {
      ++floored;
      ok = ok && s == 1.0;
    } else if (s < cfg.zoom.s_max) {
      ok = ok && s * cfg.zoom.alpha * bw <= f.width * (1 + 1e-12) &&
           s * cfg.zoom.alpha * bh <= f.height * (1 + 1e-12);
    } else {
      ++capped;
    }
    if (!ok) ++violations;
  }
  return {violations == 0 && tested == 1000,
          fmt("%d boxes, %d violations, %d at the cap, %d wider than the frame allows (s = 1)", tested,
              violations, capped, floored)};
}

Outcome format_guard(const CenteringRun& r) {
  if (!r.ran) return {false, "error: " + r.error};
  std::mt19937_64 rng(77);
  int idem_ok = 0;
  for (int i = 0; i < 100; ++i) {
    FormatSpec rf;
    rf.bit_depth = i % 2 ? 8 : 16;
    rf.metadata = {{"cam", std::to_string(i % 3)}};
    const ImageFrame ref = random_frame(rng, 24, 16, rf);
    FormatSpec cf;
    cf.bit_depth = 16;
    cf.color_space = i % 5 ? ColorSpace::srgb : ColorSpace::linear_rgb;
    ImageFrame cand = random_frame(rng, 24, 16, cf);
    if (i % 4 == 0) cand.format() = rf;
    const FormatMask m = compute_format_mask(cand, ref);
    const ImageFrame once = iterative_correct(cand, ref, m);
    const ImageFrame twice = iterative_correct(once, ref, m);
    const GuardResult g1 = apply_guard(cand, ref);
    const GuardResult g2 = apply_guard(g1.frame, ref);
    if (once == twice && g1.frame == g2.frame && !g2.report.corrected &&
        compute_format_mask(g1.frame, ref).all_ones()) {
      ++idem_ok;
    }
  }
  return {r.guard_ok == r.frames && r.frames > 0 && idem_ok == 100,
          fmt("%zu/%zu outputs re-verify at 1.0 (min %.3f), %d/100 idempotent", r.guard_ok, r.frames,
              r.worst_ones, idem_ok)};
}

Outcome sr_checks() {
  std::mt19937_64 rng(5);
  double worst_row = 0, worst_msa = 0;
  for (int i = 0; i < 10000; ++i) {
    const int h = 1 + static_cast<int>(rng() % 4);
    const int d = h * (1 + static_cast<int>(rng() % 4));
    const int n = 1 + static_cast<int>(rng() % 16);
    const sr::Matrix x = random_matrix(rng, n, d, 3);
    const sr::SwinBlock b = random_block(rng, d, h);
    for (const auto& head : b.heads) {
      const sr::Matrix a = sr::attention_weights(x, head);
      for (int t = 0; t < n; ++t) worst_row = std::max(worst_row, std::abs(a.row(t).sum() - 1.0));
    }
    if (i % 10 == 0) {
      worst_msa = std::max(worst_msa,
                           (sr::msa_forward(x, b) - test::oracle_msa(x, b)).cwiseAbs().maxCoeff());
    }
  }

  int shuffle_bad = 0;
  for (int i = 0; i < 200; ++i) {
    const int r = 1 + static_cast<int>(rng() % 4);
    sr::FeatureMap f(1 + static_cast<int>(rng() % 6), 1 + static_cast<int>(rng() % 6),
                     r * r * (1 + static_cast<int>(rng() % 3)));
    f.tokens = random_matrix(rng, f.height * f.width, f.channels(), 10);
    const sr::FeatureMap s = sr::pixel_shuffle(f, r);
    std::vector<double> a(f.tokens.data(), f.tokens.data() + f.tokens.size());
    std::vector<double> b(s.tokens.data(), s.tokens.data() + s.tokens.size());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b || s.height != f.height * r || s.width != f.width * r) ++shuffle_bad;
  }

  int shapes = 0, shape_bad = 0;
  for (int r = 2; r <= 4; ++r) {
    sr::SRConfig c;
    c.scale = r;
    c.channels = 8;
    c.heads = 2;
    c.seed = static_cast<std::uint64_t>(r);
    const sr::SRNetwork net = sr::SRNetwork::seeded(c);
    for (auto [w, h] : {std::pair{8, 8}, {16, 16}, {24, 8}, {13, 21}, {32, 17}}) {
      const ImageFrame out = sr::sr_forward(random_frame(rng, w, h), net);
      ++shapes;
      if (out.width() != r * w || out.height() != r * h) ++shape_bad;
    }
  }
  const bool ok = worst_row <= 1e-6 && worst_msa <= 1e-6 && shuffle_bad == 0 && shape_bad == 0;
  return {ok, fmt("max |row sum - 1| %.1e over 1e4 windows, shuffle mismatches %d, "
                  "shape mismatches %d/%d, max MSA-oracle diff %.1e",
                  worst_row, shuffle_bad, shape_bad, shapes, worst_msa)};
}

Outcome gimbal() {
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> u(-1, 1);
  CameraState s;
  RateGate gate;
  double t = 0, worst_q = 0;
  int invariant_bad = 0;
  for (int i = 0; i < 100000; ++i) {
    switch (rng() % 3) {
      case 0: {
        const double yaw = 170 * u(rng), pitch = 80 * u(rng);
        t += 10 * std::abs(u(rng));
        if (gate.admit(t) != Admission::accepted) break;
        s = map_pose(Quaternion::from_yaw_pitch_roll(yaw, pitch, 180 * u(rng)), s);
        if (std::abs(yaw) <= 90 && pitch >= 0 && pitch <= 60) {
          worst_q = std::max({worst_q, std::abs(s.pan - yaw), std::abs(s.tilt - pitch)});
        }
        break;
      }
      case 1:
        s = zoom_step(s, rng() % 2 ? 1 : -1);
        break;
      default:
        s = zoom_rate(s, 2 * u(rng), 50 * std::abs(u(rng)));
    }
    if (!(s.tilt >= 0 && s.tilt <= 60 && s.pan >= -90 && s.pan <= 90 && s.zoom >= 1 && s.zoom <= 7 &&
          s.valid())) {
      ++invariant_bad;
    }
  }
  RateGate g;
  int accepted = 0;
  for (int ms = 0; ms < 10000; ++ms) accepted += g.admit(ms) == Admission::accepted;
  return {invariant_bad == 0 && worst_q <= 0.25 + 1e-9 && std::abs(accepted - 1200) <= 1,
          fmt("1e5 ops, %d invariant violations, max quantization error %.4f deg, "
              "%d accepted of 10000 at 1 kHz",
              invariant_bad, worst_q, accepted)};
}

Outcome zoom_semantics() {
  int off_grid = 0;
  CameraState s;
  for (int k = 1; k <= 120; ++k) {
    s = zoom_step(s, 1);
    // strtod of the decimal literal is the oracle for the grid value.
    const double expect = std::strtod(fmt("%d.%02d", (100 + 5 * k) / 100, (100 + 5 * k) % 100).c_str(), nullptr);
    if (s.zoom != expect || !s.on_step_grid()) ++off_grid;
  }
  for (int k = 119; k >= 0; --k) {
    s = zoom_step(s, -1);
    const double expect = std::strtod(fmt("%d.%02d", (100 + 5 * k) / 100, (100 + 5 * k) % 100).c_str(), nullptr);
    if (s.zoom != expect) ++off_grid;
  }
  const bool ends = focal_from_zoom(1.0) == 4.8 && focal_from_zoom(7.0) == 48.2;
  return {off_grid == 0 && ends,
          fmt("%d off-grid values over 240 steps, f(1)=%.17g f(7)=%.17g", off_grid, focal_from_zoom(1.0),
              focal_from_zoom(7.0))};
}

Outcome dataset(const Scratch& dir) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<float> u(0, 1);
  int equal = 0;
  for (int e = 0; e < 100; ++e) {
    const std::size_t n = rng() % 12;
    EpisodeManifest m;
    m.name = "ep" + std::to_string(e);
    m.frame_size = {8 + static_cast<int>(rng() % 8), 6 + static_cast<int>(rng() % 6)};
    m.frame_format.bit_depth = e % 2 ? 8 : 16;
    std::vector<EpisodeRecord> recs;
    std::vector<std::map<std::string, ImageFrame>> frames;
    std::int64_t t = 0;
    for (std::size_t i = 0; i < n; ++i) {
      EpisodeRecord r;
      r.t_ms = t += 1 + static_cast<std::int64_t>(rng() % 30);
      for (auto& v : r.left_joints) v = 6 * u(rng) - 3;
      for (auto& v : r.right_joints) v = 6 * u(rng) - 3;
      r.left_grip = u(rng);
      r.right_grip = u(rng);
      r.gimbal_pitch = 60 * u(rng);
      r.gimbal_yaw = 180 * u(rng) - 90;
      r.zoom = 1 + 6 * u(rng);
      r.focal_mm = 4.8f + 43.4f * u(rng);
      for (auto& v : r.zoom_affine) v = 100 * u(rng) - 50;
      r.frames["top"] = frame_ref("top", i);
      recs.push_back(r);
      frames.push_back({{"top", random_frame(rng, m.frame_size.width, m.frame_size.height, m.frame_format)}});
    }
    const fs::path p = dir / ("rt" + std::to_string(e));
    write_episode(p, m, recs, frames);
    const Episode back = read_episode(p);
    bool same = back.records == recs && back.manifest.record_count == n;
    for (std::size_t i = 0; same && i < n; ++i) same = back.frames.load(back.records[i], "top") == frames[i]["top"];
    equal += same;
  }

  // Processed episodes: everything except the processed view and the proc block is untouched.
  int preserved = 0, checked = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SynthOptions so;
    so.seed = seed;
    so.frames = 15;
    so.size = {320, 180};
    so.views = {"top", "left", "front"};
    const fs::path in = dir / ("pin" + std::to_string(seed));
    const fs::path out = dir / ("pout" + std::to_string(seed));
    synthesize_episode(in, so);
    PipelineConfig cfg;
    cfg.task_label = "red";
    Pipeline(cfg).process_episode(in, out);
    const Episode a = read_episode(in);
    const Episode b = read_episode(out);
    // Stream lines compared field by field after dropping "proc".
    std::ifstream la(in / "streams.jsonl"), lb(out / "streams.jsonl");
    std::string sa, sb;
    bool ok = a.records.size() == b.records.size();
    while (ok && std::getline(la, sa) && std::getline(lb, sb)) {
      json ja = json::parse(sa), jb = json::parse(sb);
      jb.erase("proc");
      ok = ja == jb;
    }
    for (std::size_t i = 0; ok && i < a.records.size(); ++i) {
      EpisodeRecord r = b.records[i];
      r.processing.reset();
      ok = r == a.records[i];
      for (const char* v : {"left", "front"}) {
        ok = ok && slurp(in / a.records[i].frames.at(v)) == slurp(out / b.records[i].frames.at(v));
      }
    }
    ++checked;
    preserved += ok;
  }
  return {equal == 100 && preserved == checked,
          fmt("%d/100 episodes round-trip, %d/%d processed episodes preserve non-image streams", equal,
              preserved, checked)};
}

Outcome protocol(const Scratch& dir) {
  auto scene = std::make_shared<const WorldScene>(make_scene(7, 3));
  SessionOptions so;
  so.out_size = {64, 36};
  so.record_root = dir / "rec";
  so.initial.tilt = 30;

  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> u(-1, 1);
  int crashes = 0, rejects = 0, bad_rejects = 0;
  {
    Session s(scene, so);
    const std::vector<std::string> types{"hello", "pose", "zoom", "record", "bogus", ""};
    const std::vector<std::string> raw{"", "{", "[]", "null", "1e999", "{\"type\":7}", "\"hello\"",
                                       "{\"type\":\"pose\",\"q\":[1,0,0,0],\"t_ms\":\"x\"}"};
    double t = 0;
    for (int i = 0; i < 10000; ++i) {
      const Session::ClientId client = rng() % 3;
      std::vector<Outbound> out;
      try {
        if (rng() % 4 == 0) {
          out = s.handle_text(client, raw[rng() % raw.size()]);
        } else {
          json m;
          m["type"] = types[rng() % types.size()];
          if (rng() % 2) m["role"] = rng() % 3 ? "operator" : "root";
          if (rng() % 2) m["proto"] = static_cast<int>(rng() % 3);
          if (rng() % 2) m["q"] = {u(rng), u(rng), u(rng), rng() % 10 ? u(rng) : NAN};
          if (rng() % 2) m["t_ms"] = rng() % 10 ? (t += 5 * std::abs(u(rng))) : -1.0;
          if (rng() % 2) m["mode"] = rng() % 2 ? "step" : "rate";
          if (rng() % 2) m["dir"] = static_cast<int>(rng() % 5) - 2;
          if (rng() % 2) m["v"] = 3 * u(rng);
          if (rng() % 3 == 0) m["action"] = rng() % 2 ? "start" : "stop";
          if (rng() % 3 == 0) m["name"] = rng() % 2 ? "fuzz" + std::to_string(i) : "../bad";
          out = s.handle(client, m);
        }
        if (rng() % 8 == 0) {
          auto ticked = s.tick(t += 1);
          out.insert(out.end(), ticked.begin(), ticked.end());
        }
      } catch (...) {
        ++crashes;
        continue;
      }
      for (const auto& o : out) {
        if (o.msg.value("type", "") != "error") continue;
        ++rejects;
        if (!o.msg.contains("code") || !o.msg.contains("msg")) ++bad_rejects;
      }
      if (!s.camera().valid()) ++crashes;
    }
    s.stop_recording();
  }

  // Scripted one-second session: operator, recording, 1 kHz ticks.
  int frames = 0;
  bool episode_ok = false;
  std::string episode_detail;
  try {
    Session s(scene, so);
    s.handle(1, {{"type", "hello"}, {"role", "operator"}, {"proto", 1}});
    s.handle(1, {{"type", "record"}, {"action", "start"}, {"name", "scripted"}});
    s.handle(1, {{"type", "zoom"}, {"mode", "rate"}, {"v", 1.0}});
    for (int ms = 0; ms < 1000; ++ms) {
      if (ms % 5 == 0) {
        const Quaternion q = Quaternion::from_yaw_pitch_roll(10 * std::sin(ms / 200.0), 30, 0);
        s.handle(1, {{"type", "pose"}, {"q", {q.w, q.x, q.y, q.z}}, {"t_ms", ms}});
      }
      for (const auto& o : s.tick(ms)) frames += o.msg["type"] == "frame";
    }
    s.handle(1, {{"type", "record"}, {"action", "stop"}});
    const Episode ep = read_episode(so.record_root / "scripted");
    bool formats = true;
    for (const auto& r : ep.records) {
      const ImageFrame f = ep.frames.load(r, "top");
      formats = formats && f.size() == ep.manifest.frame_size &&
                verify_format(f, ep.manifest.frame_format, ep.manifest.frame_channels).ones_fraction == 1.0;
    }
    episode_ok = ep.records.size() == static_cast<std::size_t>(frames) && formats;
    episode_detail = fmt("episode %zu records", ep.records.size());
  } catch (const std::exception& e) {
    episode_detail = std::string("episode error: ") + e.what();
  }
  return {crashes == 0 && bad_rejects == 0 && rejects > 0 && std::abs(frames - 60) <= 1 && episode_ok,
          fmt("1e4 fuzzed messages, %d crashes, %d rejects (%d malformed), %d frames in 1 s, ", crashes,
              rejects, bad_rejects, frames) +
              episode_detail};
}

}  // namespace

int main() {
  Scratch dir;
  int failed = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  };

  const CenteringRun center = run_centering(dir);
  report("centering", [&] { return centering(center); });
  report("scale_law", scale_law);
  report("format_guard", [&] { return format_guard(center); });
  report("sr_kernels", sr_checks);
  report("gimbal", gimbal);
  report("zoom_semantics", zoom_semantics);
  report("dataset_roundtrip", [&] { return dataset(dir); });
  report("protocol", [&] { return protocol(dir); });
  std::printf("%d/8 criteria pass\n", 8 - failed);
  return failed;
}
