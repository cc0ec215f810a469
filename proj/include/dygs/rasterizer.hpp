#pragma once

#include "dygs/image.hpp"
#include "dygs/scene_model.hpp"

#include <optional>
#include <vector>

namespace dygs {

/// Mahalanobis radius beyond which a splat contributes nothing.
inline constexpr double kCutoffMahalanobis = 3.0;
/// Isotropic low-pass added to every projected covariance (pixels^2).
inline constexpr double kLowPass = 0.3;
/// Upper bound on a single splat's blending weight alpha * G.
inline constexpr double kMaxAlpha = 0.99;
inline constexpr int kTileSize = 16;

struct ProjectedGaussian {
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Zero();
  double cam_depth = 0.0;
  Vec3 color = Vec3::Zero();
  double alpha = 0.0;
  int source_index = -1;
};

/// Projects one 3D Gaussian through a world-to-camera pose. Returns nullopt when
/// the center lies at or behind the near plane.
std::optional<ProjectedGaussian> project_gaussian(const Vec3& mean, const Mat3& cov, const Se3Pose& pose,
                                                  const CameraIntrinsics& intrinsics);

struct RenderOutput {
  Image color;  // 3 channels
  Image depth;  // alpha-weighted camera depth
  Image alpha;  // accumulated blending weight
};

/// Loss gradients with respect to the three rendered maps. Empty images are
/// treated as all-zero.
struct RenderUpstream {
  Image color;
  Image depth;
  Image alpha;
};

struct RenderGradients : CloudGradients {
  /// Left-perturbation tangent gradient: translation part, then rotation part.
  Vec6 pose = Vec6::Zero();

  RenderGradients() = default;
  explicit RenderGradients(std::size_t n) : CloudGradients(n) {}
};

/// Preprocessed scene for one pose; forward and backward replay the same
/// projection and depth order.
class Rasterizer {
 public:
  Rasterizer(const GaussianCloud& cloud, const Se3Pose& pose, const CameraIntrinsics& intrinsics);

  /// Tiled renderer.
  [[nodiscard]] RenderOutput forward() const;
  /// Per-pixel brute force over every projected splat, no tiling.
  [[nodiscard]] RenderOutput forward_reference() const;
  /// Analytic gradients for every attribute group and, unless `want_pose` is
  /// false, the pose tangent.
  [[nodiscard]] RenderGradients backward(const RenderUpstream& upstream, bool want_pose = true) const;

  [[nodiscard]] std::size_t visible_count() const { return order_.size(); }

 private:
  struct Splat {
    Vec3 cam_mean;
    Vec2 mean2d;
    Mat3 cov3d;
    Eigen::Matrix<double, 2, 3> jacobian;
    Mat2 cov2d;
    double conic00, conic01, conic11;
    Vec3 color;
    double alpha;
    int x0, x1, y0, y1;  // inclusive pixel bounds, clipped to the image
  };

  const GaussianCloud& cloud_;
  Se3Pose pose_;
  CameraIntrinsics intrinsics_;
  std::vector<Splat> splats_;
  std::vector<int> order_;  // visible splat indices sorted by depth, ties by index
  int tiles_x_ = 0;
  int tiles_y_ = 0;
  std::vector<int> tile_offsets_;
  std::vector<int> tile_entries_;
};

RenderOutput render(const GaussianCloud& cloud, const Se3Pose& pose, const CameraIntrinsics& intrinsics);
RenderOutput render_reference(const GaussianCloud& cloud, const Se3Pose& pose, const CameraIntrinsics& intrinsics);
RenderGradients render_backward(const GaussianCloud& cloud, const Se3Pose& pose, const CameraIntrinsics& intrinsics,
                                const RenderUpstream& upstream);

}  // namespace dygs
