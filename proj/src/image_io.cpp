#include "dygs/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <vector>

namespace dygs {

namespace {

struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

bool decode(std::FILE* fp, RawPng& out) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_read_png(png, info, PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_PACKING, nullptr);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  png_bytepp rows = png_get_rows(png, info);
  out.samples.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
  std::size_t k = 0;
  for (int y = 0; y < out.height; ++y) {
    const png_bytep row = rows[y];
    for (int i = 0; i < out.width * out.channels; ++i) {
      if (out.bit_depth == 16)
        out.samples[k++] = static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1]);
      else
        out.samples[k++] = row[i];
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

RawPng read_raw(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open '" + path + "'");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("'" + path + "' is not a PNG file");
  std::rewind(fp.get());
  RawPng raw;
  if (!decode(fp.get(), raw)) throw IoError("failed to decode PNG '" + path + "'");
  return raw;
}

bool encode(std::FILE* fp, int width, int height, int color_type, int bit_depth,
            const std::vector<unsigned char>& bytes, int row_bytes) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * row_bytes));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

void write_raw(const std::string& path, int width, int height, int color_type, int bit_depth,
               const std::vector<unsigned char>& bytes, int row_bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write '" + path + "'");
  if (!encode(fp.get(), width, height, color_type, bit_depth, bytes, row_bytes))
    throw IoError("failed to encode PNG '" + path + "'");
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image read_png_rgb(const std::string& path) {
  const RawPng raw = read_raw(path);
  const double max_value = raw.bit_depth == 16 ? 65535.0 : 255.0;
  Image img(raw.width, raw.height, 3);
  const bool gray = raw.channels < 3;
  for (std::size_t p = 0; p < img.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c)
      img.data[p * 3 + c] = raw.samples[p * raw.channels + (gray ? 0 : c)] / max_value;
  return img;
}

Image read_png_depth(const std::string& path, double scale) {
  if (!(scale > 0.0)) throw IoError("depth scale must be positive");
  const RawPng raw = read_raw(path);
  if (raw.channels != 1 || raw.bit_depth != 16) throw IoError("depth image '" + path + "' must be 16-bit grayscale");
  Image img(raw.width, raw.height, 1);
  for (std::size_t p = 0; p < img.pixel_count(); ++p) img.data[p] = raw.samples[p] / scale;
  return img;
}

Mask read_png_mask(const std::string& path) {
  const RawPng raw = read_raw(path);
  const unsigned threshold = raw.bit_depth == 16 ? 128u * 257u : 128u;
  Mask mask(raw.width, raw.height, false);
  for (std::size_t p = 0; p < mask.data.size(); ++p)
    mask.data[p] = raw.samples[p * raw.channels] >= threshold ? 1 : 0;
  return mask;
}

void write_png_rgb(const std::string& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw IoError("PNG export needs 1 or 3 channels");
  std::vector<unsigned char> bytes(image.data.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), to_byte);
  write_raw(path, image.width, image.height, image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8,
            bytes, image.width * image.channels);
}

void write_png_depth(const std::string& path, const Image& depth, double scale) {
  if (depth.channels != 1) throw IoError("depth export needs 1 channel");
  std::vector<unsigned char> bytes(depth.data.size() * 2);
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    const double d = depth.data[i];
    const double v = std::isfinite(d) && d > 0.0 ? std::min(65535.0, std::round(d * scale)) : 0.0;
    const auto u = static_cast<std::uint16_t>(v);
    bytes[2 * i] = static_cast<unsigned char>(u >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(u & 0xff);
  }
  write_raw(path, depth.width, depth.height, PNG_COLOR_TYPE_GRAY, 16, bytes, depth.width * 2);
}

void write_png_mask(const std::string& path, const Mask& mask) {
  std::vector<unsigned char> bytes(mask.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
  write_raw(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY, 8, bytes, mask.width);
}

}  // namespace dygs
