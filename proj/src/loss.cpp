#include "dygs/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace dygs {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Mask mask_and(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("mask_and: shape mismatch");
  Mask out(a.width, a.height, false);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = (a.data[i] && b.data[i]) ? 1 : 0;
  return out;
}

PhotometricLoss photometric_loss(const RenderOutput& render, const FrameObservation& frame, const Mask& mask,
                                 double lambda_depth) {
  const int w = frame.rgb.width, h = frame.rgb.height;
  if (render.color.width != w || render.color.height != h || mask.width != w || mask.height != h ||
      render.depth.width != w || render.depth.height != h)
    throw std::invalid_argument("photometric_loss: shape mismatch");
  PhotometricLoss out;
  out.grad.color = Image(w, h, 3);
  out.grad.depth = Image(w, h, 1);

  std::size_t color_count = 0, depth_count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      ++color_count;
      if (frame.depth_valid(x, y)) ++depth_count;
    }
  out.pixels = color_count;
  if (color_count == 0) return out;

  const double color_scale = 1.0 / (3.0 * static_cast<double>(color_count));
  const double depth_scale = depth_count > 0 ? lambda_depth / static_cast<double>(depth_count) : 0.0;
  double color_sum = 0.0, depth_sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      for (int c = 0; c < 3; ++c) {
        const double diff = render.color.at(x, y, c) - frame.rgb.at(x, y, c);
        color_sum += std::abs(diff);
        out.grad.color.at(x, y, c) = color_scale * sign(diff);
      }
      if (frame.depth_valid(x, y)) {
        const double diff = render.depth.at(x, y) - frame.depth.at(x, y);
        depth_sum += std::abs(diff);
        out.grad.depth.at(x, y) = depth_scale * sign(diff);
      }
    }
  }
  out.color_term = color_sum * color_scale;
  out.depth_term = depth_count > 0 ? depth_sum * depth_scale : 0.0;
  out.value = out.color_term + out.depth_term;
  return out;
}

}  // namespace dygs
