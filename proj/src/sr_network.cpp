#include "avr/sr_network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <random>

#include "avr/errors.hpp"

namespace avr::sr {

namespace {

using json = nlohmann::json;

int reflect(int i, int n) {
  // numpy "reflect" padding; valid while the pad is shorter than n.
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

FeatureMap reflect_pad(const FeatureMap& x, int padded_h, int padded_w) {
  if (padded_h == x.height && padded_w == x.width) return x;
  if (padded_h - x.height >= x.height || padded_w - x.width >= x.width) {
    throw DomainError("feature map smaller than the attention window");
  }
  FeatureMap out(padded_h, padded_w, x.channels());
  for (int y = 0; y < padded_h; ++y) {
    const int sy = reflect(y, x.height);
    for (int xx = 0; xx < padded_w; ++xx) {
      const int sx = reflect(xx, x.width);
      out.tokens.row(static_cast<Eigen::Index>(y) * padded_w + xx) =
          x.tokens.row(static_cast<Eigen::Index>(sy) * x.width + sx);
    }
  }
  return out;
}

FeatureMap crop_to(const FeatureMap& x, int h, int w) {
  if (h == x.height && w == x.width) return x;
  FeatureMap out(h, w, x.channels());
  for (int y = 0; y < h; ++y) {
    out.tokens.middleRows(static_cast<Eigen::Index>(y) * w, w) =
        x.tokens.middleRows(static_cast<Eigen::Index>(y) * x.width, w);
  }
  return out;
}

void check_block(const SwinBlock& block, int d) {
  if (block.heads.empty()) throw DomainError("attention block has no heads");
  for (const AttentionHead& h : block.heads) {
    const auto dh = h.query.cols();
    if (h.query.rows() != d || h.key.rows() != d || h.value.rows() != d ||
        h.key.cols() != dh || h.value.cols() != dh || h.output.rows() != dh ||
        h.output.cols() != d) {
      throw DomainError("attention head weight shapes disagree with channel width");
    }
  }
  if (block.ln_scale.size() != d || block.ln_offset.size() != d) {
    throw DomainError("layer-norm parameters disagree with channel width");
  }
}

/// One window: LN(MSA(X) + X) written back into `out`.
void window_forward(const FeatureMap& in, FeatureMap& out, int wy, int wx,
                    const SwinBlock& block, int window, double eps) {
  const int d = in.channels();
  Matrix x(window * window, d);
  for (int y = 0; y < window; ++y) {
    for (int xx = 0; xx < window; ++xx) {
      x.row(y * window + xx) =
          in.tokens.row(static_cast<Eigen::Index>(wy + y) * in.width + (wx + xx));
    }
  }
  const Matrix z = msa_forward(x, block) + x;
  std::vector<double> row(static_cast<std::size_t>(d));
  const std::span<const double> scale(block.ln_scale.data(), static_cast<std::size_t>(d));
  const std::span<const double> offset(block.ln_offset.data(), static_cast<std::size_t>(d));
  for (int t = 0; t < window * window; ++t) {
    for (int c = 0; c < d; ++c) row[static_cast<std::size_t>(c)] = z(t, c);
    const auto normed = layer_norm(row, scale, offset, eps);
    const Eigen::Index dst =
        static_cast<Eigen::Index>(wy + t / window) * out.width + (wx + t % window);
    for (int c = 0; c < d; ++c) out.tokens(dst, c) = normed[static_cast<std::size_t>(c)];
  }
}

struct WindowGrid {
  FeatureMap padded;
  int rows = 0;
  int cols = 0;
};

WindowGrid make_grid(const FeatureMap& x, const SwinBlock& block, int window) {
  if (window < 1) throw DomainError("window must be positive");
  if (x.height <= 0 || x.width <= 0) throw DomainError("empty feature map");
  check_block(block, x.channels());
  const int ph = (x.height + window - 1) / window * window;
  const int pw = (x.width + window - 1) / window * window;
  return {reflect_pad(x, ph, pw), ph / window, pw / window};
}

// Deterministic uniform doubles in [-a, a). mt19937_64's raw sequence is fixed
// by the standard, unlike std::uniform_real_distribution.
class WeightRng {
 public:
  explicit WeightRng(std::uint64_t seed) : eng_(seed) {}
  double uniform(double a) {
    const double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    // Rounded through float so a saved-and-reloaded network is identical.
    return static_cast<double>(static_cast<float>((2.0 * u - 1.0) * a));
  }
  Matrix matrix(Eigen::Index r, Eigen::Index c, double a) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = uniform(a);
    return m;
  }

 private:
  std::mt19937_64 eng_;
};

SwinBlock seeded_block(const SRConfig& cfg, WeightRng& rng) {
  const int d = cfg.channels;
  const int dh = cfg.head_dim();
  const double a_in = std::sqrt(6.0 / (d + dh));
  SwinBlock b;
  for (int i = 0; i < cfg.heads; ++i) {
    AttentionHead h;
    h.query = rng.matrix(d, dh, a_in);
    h.key = rng.matrix(d, dh, a_in);
    h.value = rng.matrix(d, dh, a_in);
    h.output = rng.matrix(dh, d, a_in / cfg.heads);
    b.heads.push_back(std::move(h));
  }
  b.ln_scale = RowVector::Ones(d);
  b.ln_offset = RowVector::Zero(d);
  return b;
}

// --- weights file -----------------------------------------------------------

struct TensorRef {
  std::string name;
  std::vector<Eigen::Index> shape;
  double* data;
  Eigen::Index size;
};

template <typename Derived>
TensorRef tensor(std::string name, Eigen::PlainObjectBase<Derived>& m) {
  std::vector<Eigen::Index> shape;
  if (m.rows() == 1 && Derived::RowsAtCompileTime == 1) {
    shape = {m.cols()};
  } else {
    shape = {m.rows(), m.cols()};
  }
  return {std::move(name), shape, m.data(), m.size()};
}

void collect_block(std::vector<TensorRef>& out, const std::string& prefix, SwinBlock& b) {
  for (std::size_t i = 0; i < b.heads.size(); ++i) {
    const std::string p = prefix + "attn." + std::to_string(i) + ".";
    out.push_back(tensor(p + "query", b.heads[i].query));
    out.push_back(tensor(p + "key", b.heads[i].key));
    out.push_back(tensor(p + "value", b.heads[i].value));
    out.push_back(tensor(p + "output", b.heads[i].output));
  }
  out.push_back(tensor(prefix + "ln.scale", b.ln_scale));
  out.push_back(tensor(prefix + "ln.offset", b.ln_offset));
}

std::vector<TensorRef> collect(SRNetwork& net) {
  std::vector<TensorRef> out;
  out.push_back(tensor("embed.weight", net.embed));
  out.push_back(tensor("embed.bias", net.embed_bias));
  collect_block(out, "head.", net.head);
  for (std::size_t k = 0; k < net.blocks.size(); ++k) {
    collect_block(out, "blocks." + std::to_string(k) + ".", net.blocks[k]);
  }
  out.push_back(tensor("upsample.weight", net.upsample));
  out.push_back(tensor("upsample.bias", net.upsample_bias));
  return out;
}

// Eigen matrices are column-major; the file is row-major.
void write_tensor(std::ostream& os, const TensorRef& t) {
  const Eigen::Index rows = t.shape.size() == 2 ? t.shape[0] : 1;
  const Eigen::Index cols = t.shape.back();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const float f = static_cast<float>(t.data[c * rows + r]);
      const auto bits = std::bit_cast<std::uint32_t>(f);
      const char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                             static_cast<char>((bits >> 16) & 0xFF),
                             static_cast<char>((bits >> 24) & 0xFF)};
      os.write(bytes, 4);
    }
  }
}

void read_tensor(std::istream& is, TensorRef& t) {
  const Eigen::Index rows = t.shape.size() == 2 ? t.shape[0] : 1;
  const Eigen::Index cols = t.shape.back();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      unsigned char b[4];
      if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("weights file truncated");
      const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) |
                                 (static_cast<std::uint32_t>(b[3]) << 24);
      t.data[c * rows + r] = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
}

SRNetwork shaped(const SRConfig& cfg) {
  cfg.validate();
  const int d = cfg.channels;
  const int dh = cfg.head_dim();
  const int up = cfg.scale * cfg.scale * cfg.in_channels;
  auto block = [&] {
    SwinBlock b;
    for (int i = 0; i < cfg.heads; ++i) {
      b.heads.push_back({Matrix::Zero(d, dh), Matrix::Zero(d, dh), Matrix::Zero(d, dh),
                         Matrix::Zero(dh, d)});
    }
    b.ln_scale = RowVector::Ones(d);
    b.ln_offset = RowVector::Zero(d);
    return b;
  };
  SRNetwork net;
  net.config = cfg;
  net.embed = Matrix::Zero(cfg.in_channels, d);
  net.embed_bias = RowVector::Zero(d);
  net.head = block();
  for (int k = 0; k < cfg.blocks; ++k) net.blocks.push_back(block());
  net.upsample = Matrix::Zero(d, up);
  net.upsample_bias = RowVector::Zero(up);
  return net;
}

}  // namespace

void SRConfig::validate() const {
  if (channels <= 0 || heads <= 0 || channels % heads != 0) {
    throw DomainError("channels must be a positive multiple of heads");
  }
  if (window < 1) throw DomainError("window must be positive");
  if (blocks < 0) throw DomainError("block count must be non-negative");
  if (scale < 2 || scale > 4) throw DomainError("upsampling factor must be 2, 3 or 4");
  if (in_channels <= 0) throw DomainError("in_channels must be positive");
  if (!(ln_epsilon > 0.0)) throw DomainError("ln_epsilon must be positive");
}

void SRNetwork::validate() const {
  config.validate();
  const int d = config.channels;
  if (embed.rows() != config.in_channels || embed.cols() != d || embed_bias.size() != d) {
    throw DomainError("embedding weight shapes disagree with config");
  }
  check_block(head, d);
  if (static_cast<int>(blocks.size()) != config.blocks) {
    throw DomainError("block count disagrees with config");
  }
  for (const SwinBlock& b : blocks) check_block(b, d);
  const int up = config.scale * config.scale * config.in_channels;
  if (upsample.rows() != d || upsample.cols() != up || upsample_bias.size() != up) {
    throw DomainError("upsampling kernel shape disagrees with config");
  }
}

SRNetwork SRNetwork::seeded(const SRConfig& cfg) {
  SRNetwork net = shaped(cfg);
  WeightRng rng(cfg.seed);
  const int d = cfg.channels;
  const int up = cfg.scale * cfg.scale * cfg.in_channels;
  net.embed = rng.matrix(cfg.in_channels, d, std::sqrt(6.0 / (cfg.in_channels + d)));
  net.head = seeded_block(cfg, rng);
  for (auto& b : net.blocks) b = seeded_block(cfg, rng);
  net.upsample = rng.matrix(d, up, std::sqrt(6.0 / (d + up)));
  net.upsample_bias = RowVector::Constant(up, 0.5);
  return net;
}

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> scale,
                               std::span<const double> offset, double eps) {
  if (x.empty()) throw DomainError("layer_norm of an empty vector");
  if (scale.size() != x.size() || offset.size() != x.size()) {
    throw DomainError("layer_norm parameter length mismatch");
  }
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - mean) * inv * scale[i] + offset[i];
  }
  return out;
}

Matrix attention_weights(const Matrix& x, const AttentionHead& head) {
  if (x.cols() != head.query.rows()) throw DomainError("token width disagrees with W_Q");
  const Matrix q = x * head.query;
  const Matrix k = x * head.key;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head.query.cols()));
  Matrix logits = (q * k.transpose()) * inv_sqrt;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - m).exp().matrix();
    logits.row(i) /= logits.row(i).sum();
  }
  return logits;
}

Matrix msa_forward(const Matrix& x, const SwinBlock& block) {
  check_block(block, static_cast<int>(x.cols()));
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (const AttentionHead& h : block.heads) {
    const Matrix a = attention_weights(x, h);
    out += (a * (x * h.value)) * h.output;
  }
  return out;
}

FeatureMap swin_block_forward(const FeatureMap& x, const SwinBlock& block, int window,
                              double eps) {
  const WindowGrid grid = make_grid(x, block, window);
  FeatureMap out(grid.padded.height, grid.padded.width, x.channels());
  const int n = grid.rows * grid.cols;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    window_forward(grid.padded, out, (i / grid.cols) * window, (i % grid.cols) * window, block,
                   window, eps);
  }
  return crop_to(out, x.height, x.width);
}

namespace serial {

FeatureMap swin_block_forward(const FeatureMap& x, const SwinBlock& block, int window,
                              double eps) {
  const WindowGrid grid = make_grid(x, block, window);
  FeatureMap out(grid.padded.height, grid.padded.width, x.channels());
  for (int i = 0; i < grid.rows * grid.cols; ++i) {
    window_forward(grid.padded, out, (i / grid.cols) * window, (i % grid.cols) * window, block,
                   window, eps);
  }
  return crop_to(out, x.height, x.width);
}

}  // namespace serial

FeatureMap feature_aggregate(const FeatureMap& x, const std::vector<SwinBlock>& blocks,
                             int window, double eps) {
  FeatureMap out = x;
  for (const SwinBlock& b : blocks) {
    out.tokens += swin_block_forward(x, b, window, eps).tokens;
  }
  return out;
}

FeatureMap pixel_shuffle(const FeatureMap& x, int r) {
  if (r < 1) throw DomainError("pixel_shuffle factor must be positive");
  const int rr = r * r;
  if (x.channels() % rr != 0) throw DomainError("channel count not divisible by r^2");
  const int c_out = x.channels() / rr;
  FeatureMap out(x.height * r, x.width * r, c_out);
  for (int y = 0; y < x.height; ++y) {
    for (int xx = 0; xx < x.width; ++xx) {
      for (int c = 0; c < c_out; ++c) {
        for (int dy = 0; dy < r; ++dy) {
          for (int dx = 0; dx < r; ++dx) {
            out.at(y * r + dy, xx * r + dx, c) = x.at(y, xx, c * rr + dy * r + dx);
          }
        }
      }
    }
  }
  return out;
}

FeatureMap image_to_features(const ImageFrame& p) {
  FeatureMap f(p.height(), p.width(), p.channels());
  const double inv = 1.0 / p.format().max_value();
  for (int y = 0; y < p.height(); ++y) {
    for (int x = 0; x < p.width(); ++x) {
      for (int c = 0; c < p.channels(); ++c) f.at(y, x, c) = p.at(x, y, c) * inv;
    }
  }
  return f;
}

FeatureMap sr_features(const ImageFrame& p, const SRNetwork& net) {
  net.validate();
  const SRConfig& cfg = net.config;
  if (p.channels() != cfg.in_channels) throw DomainError("image channels disagree with network");
  if (p.width() < cfg.window || p.height() < cfg.window) {
    throw DomainError("SR input must be at least one attention window per side");
  }
  const FeatureMap img = image_to_features(p);
  FeatureMap emb(img.height, img.width, cfg.channels);
  emb.tokens = (img.tokens * net.embed).rowwise() + net.embed_bias;

  const FeatureMap shallow = swin_block_forward(emb, net.head, cfg.window, cfg.ln_epsilon);
  const FeatureMap deep = feature_aggregate(shallow, net.blocks, cfg.window, cfg.ln_epsilon);

  FeatureMap expanded(deep.height, deep.width, static_cast<int>(net.upsample.cols()));
  expanded.tokens = (deep.tokens * net.upsample).rowwise() + net.upsample_bias;
  return pixel_shuffle(expanded, cfg.scale);
}

ImageFrame sr_forward(const ImageFrame& p, const SRNetwork& net) {
  const FeatureMap f = sr_features(p, net);
  ImageFrame out(f.width, f.height, f.channels(), p.format());
  const double maxv = p.format().max_value();
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      for (int c = 0; c < f.channels(); ++c) {
        const double v = std::round(f.at(y, x, c) * maxv);
        out.at(x, y, c) = static_cast<std::uint16_t>(std::isfinite(v) ? std::clamp(v, 0.0, maxv) : 0.0);
      }
    }
  }
  return out;
}

void save_weights(const SRNetwork& net, const std::filesystem::path& path) {
  net.validate();
  SRNetwork copy = net;
  const auto tensors = collect(copy);
  json header;
  header["format"] = "avr-srnet/1";
  header["seed"] = net.config.seed;
  header["config"] = {{"channels", net.config.channels},   {"heads", net.config.heads},
                      {"window", net.config.window},       {"blocks", net.config.blocks},
                      {"scale", net.config.scale},         {"in_channels", net.config.in_channels},
                      {"ln_epsilon", net.config.ln_epsilon}};
  json manifest = json::array();
  for (const auto& t : tensors) manifest.push_back({{"name", t.name}, {"shape", t.shape}});
  header["tensors"] = manifest;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write("AVRW", 4);
  const auto n = static_cast<std::uint32_t>(text.size());
  const char len[4] = {static_cast<char>(n & 0xFF), static_cast<char>((n >> 8) & 0xFF),
                       static_cast<char>((n >> 16) & 0xFF), static_cast<char>((n >> 24) & 0xFF)};
  os.write(len, 4);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : tensors) write_tensor(os, t);
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

SRNetwork load_weights(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFoundError("cannot open weights file '" + path.string() + "'");
  char magic[4];
  unsigned char len[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "AVRW", 4) != 0) {
    throw IoError("'" + path.string() + "' is not an SR weights file");
  }
  if (!is.read(reinterpret_cast<char*>(len), 4)) throw IoError("weights header truncated");
  const std::uint32_t n = len[0] | (len[1] << 8) | (len[2] << 16) |
                          (static_cast<std::uint32_t>(len[3]) << 24);
  std::string text(n, '\0');
  if (!is.read(text.data(), n)) throw IoError("weights header truncated");
  const json header = json::parse(text, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "avr-srnet/1") {
    throw IoError("unsupported weights header");
  }
  SRConfig cfg;
  try {
    const json& c = header.at("config");
    cfg.channels = c.at("channels").get<int>();
    cfg.heads = c.at("heads").get<int>();
    cfg.window = c.at("window").get<int>();
    cfg.blocks = c.at("blocks").get<int>();
    cfg.scale = c.at("scale").get<int>();
    cfg.in_channels = c.at("in_channels").get<int>();
    cfg.ln_epsilon = c.at("ln_epsilon").get<double>();
    cfg.seed = header.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw IoError(std::string("weights header: ") + e.what());
  }
  SRNetwork net = shaped(cfg);
  auto tensors = collect(net);
  const json& manifest = header.at("tensors");
  if (!manifest.is_array() || manifest.size() != tensors.size()) {
    throw IoError("weights manifest does not match config");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (manifest[i].value("name", "") != tensors[i].name ||
        manifest[i].value("shape", std::vector<Eigen::Index>{}) != tensors[i].shape) {
      throw IoError("weights manifest entry " + std::to_string(i) + " does not match config");
    }
    read_tensor(is, tensors[i]);
  }
  net.validate();
  return net;
}

}  // namespace avr::sr
