#pragma once

#include "dygs/image.hpp"

#include <stdexcept>
#include <string>

namespace dygs {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit (or 16-bit) PNG as a 3-channel image in [0, 1]. Gray input is replicated.
Image read_png_rgb(const std::string& path);
/// 16-bit grayscale PNG divided by `scale` (units per meter). 0 stays 0 (invalid).
Image read_png_depth(const std::string& path, double scale);
/// 8-bit PNG thresholded at 128 (first channel).
Mask read_png_mask(const std::string& path);

/// Writes an image with 1 or 3 channels in [0, 1] as an 8-bit PNG.
void write_png_rgb(const std::string& path, const Image& image);
/// Writes round(depth * scale) as 16-bit grayscale, saturating at 65535.
void write_png_depth(const std::string& path, const Image& depth, double scale);
void write_png_mask(const std::string& path, const Mask& mask);

}  // namespace dygs
