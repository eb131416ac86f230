#include "avr/image.hpp"

#include <png.h>
#include <openssl/evp.h>

#include <algorithm>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "avr/errors.hpp"

namespace avr {

namespace {

constexpr const char* kColorSpaceKey = "avr:color_space";

struct PngWriteBuffer {
  std::vector<std::uint8_t>* out;
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<PngWriteBuffer*>(png_get_io_ptr(png));
  buf->out->insert(buf->out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

struct PngReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_read_from_span(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + length > cur->bytes.size()) {
    png_error(png, "truncated png stream");
  }
  std::memcpy(data, cur->bytes.data() + cur->offset, length);
  cur->offset += length;
}

void png_error_throwing(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void png_warning_silent(png_structp, png_const_charp) {}

}  // namespace

std::string to_string(ColorSpace cs) {
  switch (cs) {
    case ColorSpace::srgb:
      return "srgb";
    case ColorSpace::linear_rgb:
      return "linear_rgb";
    case ColorSpace::gray:
      return "gray";
  }
  return "srgb";
}

ColorSpace color_space_from_string(const std::string& name) {
  if (name == "srgb") return ColorSpace::srgb;
  if (name == "linear_rgb") return ColorSpace::linear_rgb;
  if (name == "gray") return ColorSpace::gray;
  throw DomainError("unknown color space '" + name + "'");
}

bool FormatSpec::valid() const {
  if (bit_depth != 8 && bit_depth != 16) return false;
  std::set<std::string> keys;
  for (const auto& [k, v] : metadata) {
    if (!keys.insert(k).second) return false;
  }
  return true;
}

ImageFrame::ImageFrame(int width, int height, int channels, FormatSpec format)
    : width_(width), height_(height), channels_(channels), format_(std::move(format)) {
  if (width <= 0 || height <= 0 || channels <= 0) {
    throw DomainError("image dimensions must be positive");
  }
  if (!format_.valid()) throw DomainError("invalid image format spec");
  data_.assign(static_cast<std::size_t>(width) * height * channels, 0);
}

void ImageFrame::fill(std::uint16_t v) { std::fill(data_.begin(), data_.end(), v); }

ImageFrame ImageFrame::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > width_ || y0 + h > height_) {
    throw DomainError("crop window outside image");
  }
  ImageFrame out(w, h, channels_, format_);
  for (int y = 0; y < h; ++y) {
    const auto src = row(y0 + y).subspan(static_cast<std::size_t>(x0) * channels_,
                                         static_cast<std::size_t>(w) * channels_);
    std::copy(src.begin(), src.end(), out.row(y).begin());
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const ImageFrame& frame, int compression_level) {
  if (frame.empty()) throw DomainError("cannot encode an empty frame");
  int color_type = 0;
  switch (frame.channels()) {
    case 1:
      color_type = PNG_COLOR_TYPE_GRAY;
      break;
    case 3:
      color_type = PNG_COLOR_TYPE_RGB;
      break;
    case 4:
      color_type = PNG_COLOR_TYPE_RGBA;
      break;
    default:
      throw DomainError("png supports 1, 3 or 4 channels");
  }
  const FormatSpec& fmt = frame.format();
  const int depth = fmt.bit_depth;
  const std::uint16_t maxv = fmt.max_value();

  std::vector<std::uint8_t> out;
  std::string err;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_throwing, png_warning_silent);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }

  const int stride = frame.width() * frame.channels() * (depth / 8);
  std::vector<std::uint8_t> row_bytes(static_cast<std::size_t>(stride));
  std::vector<std::string> text_store;
  std::vector<png_text> texts;
  PngWriteBuffer sink{&out};

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png encode failed: " + err);
  }
  png_set_write_fn(png, &sink, png_write_to_vector, png_flush_noop);
  png_set_compression_level(png, compression_level);
  png_set_IHDR(png, info, frame.width(), frame.height(), depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

  text_store.reserve(2 * (fmt.metadata.size() + 1));
  text_store.emplace_back(kColorSpaceKey);
  text_store.emplace_back(to_string(fmt.color_space));
  for (const auto& [k, v] : fmt.metadata) {
    text_store.push_back(k);
    text_store.push_back(v);
  }
  for (std::size_t i = 0; i < text_store.size(); i += 2) {
    png_text t{};
    t.compression = PNG_TEXT_COMPRESSION_NONE;
    t.key = text_store[i].data();
    t.text = text_store[i + 1].data();
    t.text_length = text_store[i + 1].size();
    texts.push_back(t);
  }
  png_set_text(png, info, texts.data(), static_cast<int>(texts.size()));
  png_write_info(png, info);

  for (int y = 0; y < frame.height(); ++y) {
    const auto src = frame.row(y);
    if (depth == 8) {
      for (std::size_t i = 0; i < src.size(); ++i) {
        row_bytes[i] = static_cast<std::uint8_t>(std::min(src[i], maxv));
      }
    } else {
      for (std::size_t i = 0; i < src.size(); ++i) {
        row_bytes[2 * i] = static_cast<std::uint8_t>(src[i] >> 8);
        row_bytes[2 * i + 1] = static_cast<std::uint8_t>(src[i] & 0xFF);
      }
    }
    png_write_row(png, row_bytes.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

ImageFrame decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw IoError("not a png stream");
  }
  std::string err;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_throwing, png_warning_silent);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  PngReadCursor cursor{bytes, 0};
  ImageFrame frame;
  std::vector<std::uint8_t> row_bytes;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png decode failed: " + err);
  }
  png_set_read_fn(png, &cursor, png_read_from_span);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));

  FormatSpec fmt;
  fmt.bit_depth = depth;
  fmt.color_space = channels == 1 ? ColorSpace::gray : ColorSpace::srgb;
  png_textp text = nullptr;
  int num_text = 0;
  png_get_text(png, info, &text, &num_text);
  for (int i = 0; i < num_text; ++i) {
    std::string key = text[i].key;
    std::string value(text[i].text, text[i].text_length);
    if (key == kColorSpaceKey) {
      fmt.color_space = color_space_from_string(value);
    } else {
      fmt.metadata.emplace_back(std::move(key), std::move(value));
    }
  }

  frame = ImageFrame(width, height, channels, fmt);
  row_bytes.resize(png_get_rowbytes(png, info));
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row_bytes.data(), nullptr);
    auto dst = frame.row(y);
    if (depth == 8) {
      std::copy(row_bytes.begin(), row_bytes.begin() + static_cast<std::ptrdiff_t>(dst.size()),
                dst.begin());
    } else {
      for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = static_cast<std::uint16_t>((row_bytes[2 * i] << 8) | row_bytes[2 * i + 1]);
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return frame;
}

void write_png(const ImageFrame& frame, const std::filesystem::path& path) {
  const auto bytes = encode_png(frame);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

ImageFrame read_png(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFoundError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw DomainError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw DomainError("invalid base64 payload");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

}  // namespace avr
