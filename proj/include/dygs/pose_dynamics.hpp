#pragma once

#include "dygs/scene_model.hpp"

#include <cstddef>
#include <deque>
#include <stdexcept>

namespace dygs {

/// Tangent vector on SE(3): translation part first, then axis-angle rotation.
using Tangent = Vec6;

/// Raised by se3_log when the rotation angle is too close to pi.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Mat3 skew(const Vec3& v);

/// SO(3) exponential (Rodrigues).
Mat3 so3_exp(const Vec3& phi);
/// SO(3) logarithm; valid for angles below pi - 1e-6.
Vec3 so3_log(const Mat3& r);

Se3Pose se3_exp(const Tangent& xi);
Tangent se3_log(const Se3Pose& pose);

/// Left-multiplicative update exp(step) * pose, re-orthonormalized.
Se3Pose apply_pose_update(const Se3Pose& pose, const Tangent& step);

/// Most recent estimated poses, oldest first.
class PoseHistory {
 public:
  explicit PoseHistory(std::size_t capacity = 6) : capacity_(capacity < 2 ? 2 : capacity) {}

  /// Timestamps must strictly increase.
  void push(double timestamp, const Se3Pose& pose);

  [[nodiscard]] std::size_t size() const { return poses_.size(); }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] bool empty() const { return poses_.empty(); }
  /// back(0) is the most recent pose, back(1) the one before.
  [[nodiscard]] const Se3Pose& back(std::size_t k = 0) const { return poses_[poses_.size() - 1 - k].pose; }
  [[nodiscard]] double timestamp_back(std::size_t k = 0) const {
    return poses_[poses_.size() - 1 - k].timestamp;
  }

 private:
  struct Entry {
    double timestamp;
    Se3Pose pose;
  };
  std::size_t capacity_;
  std::deque<Entry> poses_;
};

/// Constant-velocity prediction of the next pose from the last 2L poses:
/// exp((1/L^2) sum_{l=1..L} log(T_{i-l} T_{i-L-l}^{-1})) * T_{i-1}.
/// Falls back to the most recent pose (or identity) when history is short.
Se3Pose extrapolate_pose(const PoseHistory& history, int window);

}  // namespace dygs
