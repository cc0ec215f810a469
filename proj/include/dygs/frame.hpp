#pragma once

#include "dygs/image.hpp"
#include "dygs/scene_model.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace dygs {

/// One RGBD observation. Depth is in meters; 0 marks an invalid pixel.
/// The instrument mask is 1 on valid tissue.
struct FrameObservation {
  double timestamp = 0.0;
  Image rgb;    // 3 channels in [0, 1]
  Image depth;  // 1 channel, meters
  Mask instrument_mask;
  CameraIntrinsics intrinsics;

  /// Throws std::invalid_argument on shape mismatches or negative depth.
  void validate() const;
  [[nodiscard]] bool depth_valid(int x, int y) const {
    const double d = depth.at(x, y);
    return d > 0.0 && std::isfinite(d);
  }
};

struct Dataset {
  CameraIntrinsics intrinsics;
  double t_max = 1.0;
  std::vector<FrameObservation> frames;
  /// Ground-truth world-to-camera poses, when known.
  std::vector<std::optional<Se3Pose>> gt_poses;

  [[nodiscard]] std::size_t size() const { return frames.size(); }
};

}  // namespace dygs
