#pragma once

#include <cstddef>
#include <vector>

namespace dygs {

/// Row-major, channel-interleaved floating point image.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  [[nodiscard]] std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  [[nodiscard]] bool empty() const { return data.empty(); }
  [[nodiscard]] bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  [[nodiscard]] double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Binary map stored one byte per pixel; nonzero means set.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> data;

  Mask() = default;
  Mask(int w, int h, bool fill) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

  [[nodiscard]] bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  [[nodiscard]] std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += v != 0;
    return n;
  }

  friend bool operator==(const Mask&, const Mask&) = default;
};

}  // namespace dygs
