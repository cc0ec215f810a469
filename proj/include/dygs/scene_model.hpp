#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dygs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Quaternion stored as (w, x, y, z).
using Quat = Vec4;

/// Degree-0 spherical harmonics basis constant.
inline constexpr double kShC0 = 0.2820947917738781;

/// Number of deformable attribute dimensions per basis: position (3),
/// rotation quaternion (4), log-scale (3), SH color (3).
inline constexpr int kDeformDims = 13;
inline constexpr int kDeformPos = 0;
inline constexpr int kDeformRot = 3;
inline constexpr int kDeformScale = 7;
inline constexpr int kDeformColor = 10;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  double near = 0.01;

  /// Throws std::invalid_argument when the intrinsics violate their invariants.
  void validate() const;

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Rigid transform x -> R x + t. Camera poses are stored world-to-camera.
struct Se3Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Se3Pose identity() { return {}; }
  static Se3Pose from_matrix(const Mat4& m);

  [[nodiscard]] Mat4 matrix() const;
  [[nodiscard]] Se3Pose inverse() const;
  [[nodiscard]] Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  /// Projects the rotation back onto SO(3) (SVD) so the orthonormality invariant holds.
  void reorthonormalize();

  friend Se3Pose operator*(const Se3Pose& a, const Se3Pose& b) {
    return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
  }
  friend bool operator==(const Se3Pose& a, const Se3Pose& b) {
    return a.rotation == b.rotation && a.translation == b.translation;
  }
};

/// Per-point Gaussian-basis deformation curves. Each point owns B bases; a basis
/// has a center tau, a log-width and one weight per deformable dimension.
/// Times are measured relative to `t_origin`.
struct DeformationParams {
  int basis_count = 0;
  double t_origin = 0.0;
  double t_span = 1.0;
  std::vector<double> taus;         // N * B
  std::vector<double> log_sigmas;   // N * B
  std::vector<double> weights;      // N * B * kDeformDims

  [[nodiscard]] std::size_t count() const {
    return basis_count == 0 ? 0 : taus.size() / static_cast<std::size_t>(basis_count);
  }
  /// Initial (evenly spaced) center of basis j; used for partial activation.
  [[nodiscard]] double initial_tau(int j) const {
    return t_span * static_cast<double>(j) / static_cast<double>(basis_count - 1);
  }
  double* weight_row(std::size_t point, int basis) {
    return weights.data() + (point * basis_count + basis) * kDeformDims;
  }
  [[nodiscard]] const double* weight_row(std::size_t point, int basis) const {
    return weights.data() + (point * basis_count + basis) * kDeformDims;
  }

  /// Appends `n` points whose bases sit at their initial centers with zero weight.
  void append_fresh(std::size_t n);

  friend bool operator==(const DeformationParams&, const DeformationParams&) = default;
};

/// Gradients of a scalar loss with respect to per-point cloud attributes.
struct CloudGradients {
  std::vector<Vec3> positions;
  std::vector<Vec3> log_scales;
  std::vector<Quat> rotations;
  std::vector<Vec3> sh_colors;
  std::vector<double> logit_opacities;

  CloudGradients() = default;
  explicit CloudGradients(std::size_t n)
      : positions(n, Vec3::Zero()), log_scales(n, Vec3::Zero()), rotations(n, Quat::Zero()),
        sh_colors(n, Vec3::Zero()), logit_opacities(n, 0.0) {}
  [[nodiscard]] std::size_t size() const { return positions.size(); }
};

/// Canonical Gaussian point set. Scales are stored in log space, opacities as
/// logits, colors as degree-0 SH coefficients.
struct GaussianCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> log_scales;
  std::vector<Quat> rotations;
  std::vector<Vec3> sh_colors;
  std::vector<double> logit_opacities;
  DeformationParams deformation;

  [[nodiscard]] std::size_t size() const { return positions.size(); }
  [[nodiscard]] bool empty() const { return positions.empty(); }

  void reserve(std::size_t n);
  void push_back(const Vec3& position, const Vec3& log_scale, const Quat& rotation,
                 const Vec3& sh_color, double logit_opacity);
  /// Concatenates `other` onto this cloud (the merge operator). Both clouds must
  /// share the same deformation basis layout, or `other` must carry none.
  void append(const GaussianCloud& other);

  /// Throws std::invalid_argument when array lengths disagree or values are non-finite.
  void validate() const;

  friend bool operator==(const GaussianCloud&, const GaussianCloud&) = default;
};

Quat normalize_quat(const Quat& q);
Quat quat_multiply(const Quat& a, const Quat& b);
Mat3 quat_to_matrix(const Quat& q);
Quat matrix_to_quat(const Mat3& r);

/// R diag(exp(s))^2 R^T for a (possibly unnormalized) quaternion.
Mat3 build_covariance(const Vec3& log_scale, const Quat& rotation);

Vec3 sh_to_color(const Vec3& sh);
Vec3 color_to_sh(const Vec3& rgb);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Rigidly moves a cloud: positions by T, rotations left-composed with Q(T).
/// Position and rotation deformation weights are carried along with the frame.
GaussianCloud transform_cloud(const GaussianCloud& cloud, const Se3Pose& transform);

}  // namespace dygs
