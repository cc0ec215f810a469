#pragma once

#include "dygs/frame.hpp"
#include "dygs/rasterizer.hpp"

namespace dygs {

struct PhotometricLoss {
  double value = 0.0;
  double color_term = 0.0;
  double depth_term = 0.0;
  RenderUpstream grad;  // dL/d(rendered color), dL/d(rendered depth)
  std::size_t pixels = 0;
};

/// Mean absolute color error over mask pixels (channels averaged) plus
/// lambda_depth times the mean absolute depth error over mask pixels that carry
/// valid observed depth. Gradients are sign maps scaled by the reduction.
PhotometricLoss photometric_loss(const RenderOutput& render, const FrameObservation& frame, const Mask& mask,
                                 double lambda_depth);

/// Elementwise AND of two masks of the same shape.
Mask mask_and(const Mask& a, const Mask& b);

}  // namespace dygs
