#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avr/geometry.hpp"

namespace avr {

enum class ColorSpace { srgb, linear_rgb, gray };

std::string to_string(ColorSpace cs);
/// Throws DomainError for unknown names.
ColorSpace color_space_from_string(const std::string& name);

using Metadata = std::vector<std::pair<std::string, std::string>>;

/// Storage format of an ImageFrame. bit_depth is 8 or 16; metadata keys are
/// unique and kept in insertion order.
struct FormatSpec {
  int bit_depth = 8;
  ColorSpace color_space = ColorSpace::srgb;
  Metadata metadata;

  std::uint16_t max_value() const { return bit_depth == 16 ? 0xFFFF : 0xFF; }
  bool valid() const;
  friend bool operator==(const FormatSpec&, const FormatSpec&) = default;
};

/// Interleaved raster. Samples are held in 16-bit storage regardless of the
/// declared bit depth, so an 8-bit frame can carry out-of-range values; those
/// are exactly what the format guard flags per pixel.
class ImageFrame {
 public:
  ImageFrame() = default;
  ImageFrame(int width, int height, int channels, FormatSpec format = {});

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  FrameSize size() const { return {width_, height_}; }
  bool empty() const { return data_.empty(); }

  const FormatSpec& format() const { return format_; }
  FormatSpec& format() { return format_; }

  std::uint16_t& at(int x, int y, int c) { return data_[index(x, y, c)]; }
  std::uint16_t at(int x, int y, int c) const { return data_[index(x, y, c)]; }

  std::span<std::uint16_t> pixels() { return data_; }
  std::span<const std::uint16_t> pixels() const { return data_; }
  std::span<std::uint16_t> row(int y) {
    return std::span(data_).subspan(static_cast<std::size_t>(y) * width_ * channels_,
                                    static_cast<std::size_t>(width_) * channels_);
  }
  std::span<const std::uint16_t> row(int y) const {
    return std::span(data_).subspan(static_cast<std::size_t>(y) * width_ * channels_,
                                    static_cast<std::size_t>(width_) * channels_);
  }

  void fill(std::uint16_t v);
  /// Copy of the [x0, x0+w) x [y0, y0+h) window; must lie inside the frame.
  ImageFrame crop(int x0, int y0, int w, int h) const;

  friend bool operator==(const ImageFrame&, const ImageFrame&) = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  FormatSpec format_;
  std::vector<std::uint16_t> data_;
};

/// PNG codec. Colour space and metadata travel in tEXt chunks; samples above
/// the declared bit depth are clamped on encode.
std::vector<std::uint8_t> encode_png(const ImageFrame& frame, int compression_level = 6);
ImageFrame decode_png(std::span<const std::uint8_t> bytes);
void write_png(const ImageFrame& frame, const std::filesystem::path& path);
ImageFrame read_png(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace avr
