#include "avr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "avr/errors.hpp"

namespace avr {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kPatchMargin = 2;

std::array<float, 9> to_floats(const Affine2D& a) {
  std::array<float, 9> out{};
  for (std::size_t i = 0; i < 9; ++i) out[i] = static_cast<float>(a.entries()[i]);
  return out;
}

struct Patch {
  int x0 = 0, y0 = 0, w = 0, h = 0;
};

/// Integer source window around the alpha-padded target, grown to `min_side`
/// where the frame allows it.
Patch roi_patch(const BoundingBox& box, double alpha, FrameSize f, int min_side) {
  const Point2 c = bbox_center(box);
  const double half_w = std::max(alpha * (box.width() + 1.0) / 2.0, min_side / 2.0);
  const double half_h = std::max(alpha * (box.height() + 1.0) / 2.0, min_side / 2.0);
  const int x0 = std::max(0, static_cast<int>(std::floor(c.x - half_w)) - kPatchMargin);
  const int y0 = std::max(0, static_cast<int>(std::floor(c.y - half_h)) - kPatchMargin);
  const int x1 = std::min(f.width, static_cast<int>(std::ceil(c.x + half_w)) + kPatchMargin + 1);
  const int y1 = std::min(f.height, static_cast<int>(std::ceil(c.y + half_h)) + kPatchMargin + 1);
  return {x0, y0, x1 - x0, y1 - y0};
}

/// Output-space rectangle covered by the alpha-padded target after `a`.
kernels::Rect roi_output_rect(const BoundingBox& box, double alpha, const Affine2D& a,
                              FrameSize f) {
  const Point2 c = bbox_center(box);
  const double half_w = alpha * (box.width() + 1.0) / 2.0;
  const double half_h = alpha * (box.height() + 1.0) / 2.0;
  const Point2 p0 = a.apply({c.x - half_w, c.y - half_h});
  const Point2 p1 = a.apply({c.x + half_w, c.y + half_h});
  kernels::Rect r{static_cast<int>(std::floor(std::min(p0.x, p1.x))),
                  static_cast<int>(std::floor(std::min(p0.y, p1.y))),
                  static_cast<int>(std::ceil(std::max(p0.x, p1.x))) + 1,
                  static_cast<int>(std::ceil(std::max(p0.y, p1.y))) + 1};
  return r.intersect(kernels::Rect::full(f));
}

}  // namespace

std::string to_string(SrMode m) {
  switch (m) {
    case SrMode::network:
      return "network";
    case SrMode::bicubic:
      return "bicubic";
    case SrMode::none:
      return "none";
  }
  return "none";
}

std::string to_string(MissPolicy m) {
  return m == MissPolicy::hold_last ? "hold_last" : "passthrough";
}

SrMode sr_mode_from_string(const std::string& s) {
  if (s == "network") return SrMode::network;
  if (s == "bicubic") return SrMode::bicubic;
  if (s == "none") return SrMode::none;
  throw DomainError("unknown sr mode '" + s + "' (network|bicubic|none)");
}

MissPolicy miss_policy_from_string(const std::string& s) {
  if (s == "hold_last") return MissPolicy::hold_last;
  if (s == "passthrough") return MissPolicy::passthrough;
  throw DomainError("unknown miss policy '" + s + "' (hold_last|passthrough)");
}

void PipelineConfig::validate() const {
  zoom.validate();
  detector.validate();
  if (sr_factor < 1 || sr_factor > 4) throw DomainError("sr_factor must be in [1, 4]");
  if (chunk_frames < 1) throw DomainError("chunk_frames must be positive");
  if (std::find(known_views().begin(), known_views().end(), view) == known_views().end()) {
    throw DomainError("unknown view '" + view + "'");
  }
}

json PipelineConfig::to_json() const {
  json j;
  j["s_max"] = zoom.s_max;
  j["alpha"] = zoom.alpha;
  j["sr"] = to_string(sr);
  j["miss_policy"] = to_string(miss);
  j["task"] = task_label;
  j["sr_factor"] = sr_factor;
  j["view"] = view;
  j["detector"] = detector.mode == DetectorConfig::Mode::remote ? "remote" : "reference_blob";
  if (detector.mode == DetectorConfig::Mode::remote) j["endpoint"] = detector.endpoint;
  return j;
}

json EpisodeSummary::to_json() const {
  return {{"frames", frames},
          {"hits", hits},
          {"misses", misses},
          {"mean_s", mean_scale},
          {"runtime_s", runtime_s}};
}

Pipeline::Pipeline(PipelineConfig cfg, std::optional<sr::SRNetwork> network)
    : cfg_(std::move(cfg)), network_(std::move(network)) {
  cfg_.validate();
  if (cfg_.sr == SrMode::network) {
    if (!network_) throw DomainError("sr mode 'network' needs SR weights");
    network_->validate();
  }
}

Pipeline::Plan Pipeline::plan(const ImageFrame& frame) const {
  Plan p;
  std::vector<Detection> dets;
  try {
    dets = detect(frame, cfg_.detector, cfg_.task_label);
  } catch (const std::exception& e) {
    // Detector failure counts as a miss; the miss policy decides the output.
    p.error = std::string("detector: ") + e.what();
  }
  p.detection = select_target(dets, cfg_.task_label);
  if (!p.detection) {
    p.miss = true;
    return p;
  }
  const FrameSize f = frame.size();
  const ScaleResult sc = compute_scale_factor(p.detection->box, f, cfg_.zoom);
  p.scale = sc.s;
  p.affine = compose(zoom_transform(sc.s, f), recenter_transform(p.detection->box, f));
  return p;
}

void Pipeline::resolve(Plan& p, PipelineState& state) const {
  if (!p.miss) {
    state.last_affine = p.affine;
    state.last_scale = p.scale;
    state.last_detection = p.detection;
    return;
  }
  if (cfg_.miss == MissPolicy::hold_last && state.last_affine) {
    p.affine = *state.last_affine;
    p.scale = *state.last_scale;
    p.detection = state.last_detection;
    p.held = true;
    return;
  }
  p.passthrough = true;
  p.affine = Affine2D::identity();
  p.scale = 1.0;
  p.detection.reset();
}

FrameResult Pipeline::render(const ImageFrame& frame, const Plan& p) const {
  FrameResult r;
  r.affine = p.affine;
  r.scale = p.scale;
  r.detection = p.detection;
  r.miss = p.miss;
  r.held = p.held;
  r.error = p.error;

  if (p.passthrough) {
    r.frame = frame;
    r.guard = verify_frame(frame, frame);
    return r;
  }

  const FrameSize f = frame.size();
  ImageFrame out = crop_and_fill(frame, p.affine, f);

  if (cfg_.sr != SrMode::none && p.detection) {
    const int cap = (cfg_.sr == SrMode::network) ? network_->config.scale : cfg_.sr_factor;
    const int u = std::min(cap, static_cast<int>(std::ceil(p.scale - 1e-12)));
    // The network has a fixed factor; smaller factors fall back to bicubic.
    const bool use_net = cfg_.sr == SrMode::network && u == network_->config.scale;
    const int min_side = use_net ? network_->config.window : 4;
    if (u >= 2) {
      const Patch patch = roi_patch(p.detection->box, cfg_.zoom.alpha, f, min_side);
      if (patch.w >= min_side && patch.h >= min_side) {
        const ImageFrame lr = frame.crop(patch.x0, patch.y0, patch.w, patch.h);
        const ImageFrame up = use_net ? sr::sr_forward(lr, *network_) : bicubic_upscale(lr, u);
        // output -> source -> upscaled patch (pixel-center aligned)
        const Affine2D src_to_patch = Affine2D::from_rows(
            u, 0.0, u * (0.5 - patch.x0) - 0.5, 0.0, u, u * (0.5 - patch.y0) - 0.5);
        const Affine2D out_to_patch = compose(src_to_patch, p.affine.inverse());
        r.sr_region = roi_output_rect(p.detection->box, cfg_.zoom.alpha, p.affine, f);
        kernels::warp_bilinear(up, out_to_patch, out, r.sr_region, kernels::Outside::keep);
        r.sr_factor = u;
      }
    }
  }

  GuardResult g = apply_guard(out, frame);
  r.frame = std::move(g.frame);
  r.guard = g.report;
  return r;
}

FrameResult Pipeline::process_frame(const ImageFrame& frame, PipelineState& state) const {
  Plan p = plan(frame);
  resolve(p, state);
  return render(frame, p);
}

EpisodeSummary Pipeline::process_episode(const fs::path& in_dir, const fs::path& out_dir) const {
  const auto t0 = std::chrono::steady_clock::now();
  const Episode ep = read_episode(in_dir);

  EpisodeManifest manifest = ep.manifest;
  manifest.processing = {{"source", fs::absolute(in_dir).lexically_normal().string()},
                         {"config", cfg_.to_json()}};
  EpisodeWriter writer(out_dir, manifest);

  EpisodeSummary summary;
  double scale_sum = 0.0;
  PipelineState state;
  const std::size_t n = ep.records.size();
  const std::size_t chunk = static_cast<std::size_t>(cfg_.chunk_frames);

  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    const int m = static_cast<int>(end - begin);
    std::vector<std::optional<ImageFrame>> inputs(static_cast<std::size_t>(m));
    std::vector<Plan> plans(static_cast<std::size_t>(m));
    std::vector<std::vector<std::uint8_t>> encoded(static_cast<std::size_t>(m));
    std::vector<ProcessingInfo> infos(static_cast<std::size_t>(m));

    for (int i = 0; i < m; ++i) {
      const EpisodeRecord& rec = ep.records[begin + static_cast<std::size_t>(i)];
      if (rec.frames.count(cfg_.view)) inputs[static_cast<std::size_t>(i)] = ep.frames.load(rec, cfg_.view);
    }

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < m; ++i) {
      const auto& in = inputs[static_cast<std::size_t>(i)];
      if (!in) continue;
      if (in->size() != ep.manifest.frame_size) {
        plans[static_cast<std::size_t>(i)].miss = true;
        plans[static_cast<std::size_t>(i)].error = "frame size disagrees with the manifest";
        continue;
      }
      plans[static_cast<std::size_t>(i)] = plan(*in);
    }

    // hold_last depends on the previous frame's outcome, so this runs in order.
    for (int i = 0; i < m; ++i) {
      if (inputs[static_cast<std::size_t>(i)]) resolve(plans[static_cast<std::size_t>(i)], state);
    }

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < m; ++i) {
      const auto& in = inputs[static_cast<std::size_t>(i)];
      ProcessingInfo& info = infos[static_cast<std::size_t>(i)];
      if (!in) {
        info.error = "no '" + cfg_.view + "' frame";
        continue;
      }
      Plan& p = plans[static_cast<std::size_t>(i)];
      if (in->size() != ep.manifest.frame_size) {
        info.error = p.error;
        encoded[static_cast<std::size_t>(i)] = encode_png(*in);
        continue;
      }
      FrameResult fr;
      try {
        fr = render(*in, p);
      } catch (const std::exception& e) {
        fr = FrameResult{};
        fr.frame = *in;
        fr.error = std::string("render: ") + e.what();
        fr.miss = p.miss;
      }
      info.hit = !p.miss;
      info.scale = static_cast<float>(fr.scale);
      info.affine = to_floats(fr.affine);
      info.label = fr.detection ? fr.detection->label : "";
      info.error = fr.error;
      info.guard_ones_fraction = static_cast<float>(fr.guard.ones_fraction);
      info.guard_corrected = fr.guard.corrected;
      encoded[static_cast<std::size_t>(i)] = encode_png(fr.frame);
    }

    for (int i = 0; i < m; ++i) {
      const std::size_t idx = begin + static_cast<std::size_t>(i);
      EpisodeRecord rec = ep.records[idx];
      for (const auto& [view, ref] : rec.frames) {
        if (view == cfg_.view) {
          writer.write_frame_bytes(ref, encoded[static_cast<std::size_t>(i)]);
        } else {
          fs::create_directories((out_dir / ref).parent_path());
          fs::copy_file(in_dir / ref, out_dir / ref, fs::copy_options::overwrite_existing);
        }
      }
      if (rec.depth) {
        fs::create_directories((out_dir / *rec.depth).parent_path());
        fs::copy_file(in_dir / *rec.depth, out_dir / *rec.depth,
                      fs::copy_options::overwrite_existing);
      }
      const ProcessingInfo& info = infos[static_cast<std::size_t>(i)];
      rec.processing = info;
      writer.append_record(rec);
      ++summary.frames;
      if (inputs[static_cast<std::size_t>(i)]) {
        if (info.hit) {
          ++summary.hits;
        } else {
          ++summary.misses;
        }
      }
      scale_sum += info.scale;
    }
  }
  writer.close();

  summary.mean_scale = summary.frames ? scale_sum / static_cast<double>(summary.frames) : 0.0;
  summary.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ofstream os(out_dir / "summary.json");
  if (!os) throw IoError("cannot write summary.json");
  os << summary.to_json().dump(2) << "\n";
  return summary;
}

}  // namespace avr
