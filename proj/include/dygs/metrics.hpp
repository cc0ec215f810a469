#pragma once

#include "dygs/image.hpp"
#include "dygs/scene_model.hpp"

#include <stdexcept>
#include <vector>

namespace dygs {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Timestamped world-to-camera poses.
struct Trajectory {
  std::vector<double> timestamps;
  std::vector<Se3Pose> poses;

  [[nodiscard]] std::size_t size() const { return poses.size(); }
  /// Camera centers (camera-to-world translations).
  [[nodiscard]] std::vector<Vec3> centers() const;
  /// Total path length of the camera centers.
  [[nodiscard]] double length() const;
};

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) over all channels of the mask=1 pixels; identical images
/// give kPsnrCap. A null mask means every pixel. Throws MetricError on an empty mask.
double psnr(const Image& a, const Image& b, const Mask* mask = nullptr);

/// Single-scale SSIM on luminance (0.299, 0.587, 0.114) with an 11x11 Gaussian
/// window (sigma 1.5), averaged over window centers where the window fits.
double ssim(const Image& a, const Image& b);

struct RigidAlignment {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

/// Least-squares rotation + translation mapping `source` points onto `target`.
RigidAlignment umeyama_rigid(const std::vector<Vec3>& source, const std::vector<Vec3>& target);

/// RMSE in millimeters of camera centers after rigid alignment of `estimated` onto `reference`.
double ate(const Trajectory& estimated, const Trajectory& reference);

}  // namespace dygs
