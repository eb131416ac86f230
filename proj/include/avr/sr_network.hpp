#pragma once

// Windowed self-attention super-resolution forward pass:
//
//   SR(P) = Up(Agg(Head(Embed(P))))
//   Head(X) = LN(MSA(X) + X)                  evaluated per window
//   Agg(X)  = X + sum_k Block_k(X)            every block sees the same X
//   MSA(X)  = sum_i Attn(X Wq_i, X Wk_i, X Wv_i) Wo_i
//   Up(X)   = PixelShuffle(X * W_up, r)
//
// Heads are summed after their own output projection rather than
// concatenated. Inference only; weights are seeded or loaded from file.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "avr/image.hpp"

namespace avr::sr {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// Token-major feature tensor: row y * width + x holds that pixel's channels.
struct FeatureMap {
  int height = 0;
  int width = 0;
  Matrix tokens;  // (height * width) x channels

  FeatureMap() = default;
  FeatureMap(int h, int w, int channels) : height(h), width(w), tokens(Matrix::Zero(h * w, channels)) {}

  int channels() const { return static_cast<int>(tokens.cols()); }
  double& at(int y, int x, int c) { return tokens(static_cast<Eigen::Index>(y) * width + x, c); }
  double at(int y, int x, int c) const {
    return tokens(static_cast<Eigen::Index>(y) * width + x, c);
  }
  bool all_finite() const { return tokens.allFinite(); }
};

struct AttentionHead {
  Matrix query;   // d x d/h
  Matrix key;     // d x d/h
  Matrix value;   // d x d/h
  Matrix output;  // d/h x d
};

struct SwinBlock {
  std::vector<AttentionHead> heads;
  RowVector ln_scale;   // d
  RowVector ln_offset;  // d
};

struct SRConfig {
  int channels = 32;     // feature width d
  int heads = 4;         // h; channels % heads == 0
  int window = 8;        // attention window side in pixels
  int blocks = 2;        // K aggregation blocks
  int scale = 2;         // r in {2, 3, 4}
  int in_channels = 3;   // image channels in and out
  double ln_epsilon = 1e-5;
  std::uint64_t seed = 0;

  int head_dim() const { return channels / heads; }
  void validate() const;
};

struct SRNetwork {
  SRConfig config;
  Matrix embed;            // in_channels x d
  RowVector embed_bias;    // d
  SwinBlock head;          // shallow feature extractor
  std::vector<SwinBlock> blocks;
  Matrix upsample;         // d x (r^2 * in_channels)
  RowVector upsample_bias; // r^2 * in_channels

  /// Throws DomainError when any weight shape disagrees with `config`.
  void validate() const;

  /// Deterministic pseudorandom weights derived from config.seed.
  static SRNetwork seeded(const SRConfig& cfg);
};

/// (x - mean) / sqrt(var + eps) * scale + offset with population variance.
std::vector<double> layer_norm(std::span<const double> x, std::span<const double> scale,
                               std::span<const double> offset, double eps);

/// Row-stochastic attention matrix softmax(Q K^T / sqrt(d/h)) for one head.
Matrix attention_weights(const Matrix& x, const AttentionHead& head);

/// MSA over one window's tokens (n x d). Throws DomainError on shape mismatch.
Matrix msa_forward(const Matrix& x, const SwinBlock& block);

/// LN(MSA(X) + X) per non-overlapping window. Sides not divisible by the
/// window are reflect-padded and cropped afterwards.
FeatureMap swin_block_forward(const FeatureMap& x, const SwinBlock& block, int window,
                              double eps);

/// X + sum_k Block_k(X).
FeatureMap feature_aggregate(const FeatureMap& x, const std::vector<SwinBlock>& blocks,
                             int window, double eps);

/// Depth-to-space: input channel c*r^2 + dy*r + dx lands at output channel c,
/// pixel (y*r + dy, x*r + dx). Throws DomainError if channels % r^2 != 0.
FeatureMap pixel_shuffle(const FeatureMap& x, int r);

/// Image -> normalized [0, 1] feature map with in_channels channels.
FeatureMap image_to_features(const ImageFrame& p);

/// Network output before quantization (in_channels wide, r times larger).
FeatureMap sr_features(const ImageFrame& p, const SRNetwork& net);

/// Full forward pass; output keeps the input's pixel format and is exactly
/// r times the input size. The input sides must be at least one window.
ImageFrame sr_forward(const ImageFrame& p, const SRNetwork& net);

/// Weights file: "AVRW", uint32 LE header length, JSON header (config,
/// seed, tensor manifest), then float32 LE tensors in manifest order.
void save_weights(const SRNetwork& net, const std::filesystem::path& path);
SRNetwork load_weights(const std::filesystem::path& path);

namespace serial {

/// Window loop without OpenMP; must match avr::sr::swin_block_forward bit for bit.
FeatureMap swin_block_forward(const FeatureMap& x, const SwinBlock& block, int window,
                              double eps);

}  // namespace serial

}  // namespace avr::sr
