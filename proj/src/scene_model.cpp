#include "dygs/scene_model.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dygs {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
  if (width < 1 || height < 1) throw std::invalid_argument("intrinsics: image size must be at least 1x1");
  if (!(near > 0.0 && near < 10.0)) throw std::invalid_argument("intrinsics: near plane must lie in (0, 10)");
}

Se3Pose Se3Pose::from_matrix(const Mat4& m) {
  Se3Pose p;
  p.rotation = m.topLeftCorner<3, 3>();
  p.translation = m.topRightCorner<3, 1>();
  return p;
}

Mat4 Se3Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Se3Pose Se3Pose::inverse() const {
  Se3Pose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

void Se3Pose::reorthonormalize() {
  Eigen::JacobiSVD<Mat3> svd(rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  rotation = r;
}

void DeformationParams::append_fresh(std::size_t n) {
  if (basis_count == 0) return;
  const double sigma = t_span / static_cast<double>(basis_count - 1);
  taus.reserve(taus.size() + n * basis_count);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < basis_count; ++j) {
      taus.push_back(initial_tau(j));
      log_sigmas.push_back(std::log(sigma));
    }
  }
  weights.resize(weights.size() + n * basis_count * kDeformDims, 0.0);
}

void GaussianCloud::reserve(std::size_t n) {
  positions.reserve(n);
  log_scales.reserve(n);
  rotations.reserve(n);
  sh_colors.reserve(n);
  logit_opacities.reserve(n);
}

void GaussianCloud::push_back(const Vec3& position, const Vec3& log_scale, const Quat& rotation,
                              const Vec3& sh_color, double logit_opacity) {
  positions.push_back(position);
  log_scales.push_back(log_scale);
  rotations.push_back(normalize_quat(rotation));
  sh_colors.push_back(sh_color);
  logit_opacities.push_back(logit_opacity);
  deformation.append_fresh(1);
}

void GaussianCloud::append(const GaussianCloud& other) {
  const auto& od = other.deformation;
  if (od.basis_count != 0 && deformation.basis_count != 0 &&
      (od.basis_count != deformation.basis_count || od.t_span != deformation.t_span ||
       od.t_origin != deformation.t_origin)) {
    throw std::invalid_argument("append: deformation layouts differ");
  }
  positions.insert(positions.end(), other.positions.begin(), other.positions.end());
  log_scales.insert(log_scales.end(), other.log_scales.begin(), other.log_scales.end());
  rotations.insert(rotations.end(), other.rotations.begin(), other.rotations.end());
  sh_colors.insert(sh_colors.end(), other.sh_colors.begin(), other.sh_colors.end());
  logit_opacities.insert(logit_opacities.end(), other.logit_opacities.begin(), other.logit_opacities.end());
  if (deformation.basis_count == 0) return;
  if (od.basis_count == 0) {
    deformation.append_fresh(other.size());
  } else {
    auto& d = deformation;
    d.taus.insert(d.taus.end(), od.taus.begin(), od.taus.end());
    d.log_sigmas.insert(d.log_sigmas.end(), od.log_sigmas.begin(), od.log_sigmas.end());
    d.weights.insert(d.weights.end(), od.weights.begin(), od.weights.end());
  }
}

void GaussianCloud::validate() const {
  const std::size_t n = positions.size();
  if (log_scales.size() != n || rotations.size() != n || sh_colors.size() != n || logit_opacities.size() != n)
    throw std::invalid_argument("cloud: attribute arrays have different lengths");
  if (deformation.basis_count != 0) {
    const std::size_t b = static_cast<std::size_t>(deformation.basis_count);
    if (deformation.taus.size() != n * b || deformation.log_sigmas.size() != n * b ||
        deformation.weights.size() != n * b * kDeformDims)
      throw std::invalid_argument("cloud: deformation arrays do not match point count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!positions[i].allFinite() || !log_scales[i].allFinite() || !rotations[i].allFinite() ||
        !sh_colors[i].allFinite() || !std::isfinite(logit_opacities[i]))
      throw std::invalid_argument("cloud: non-finite attribute at point " + std::to_string(i));
  }
}

Quat normalize_quat(const Quat& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("quaternion has zero or non-finite norm");
  return q / n;
}

Quat quat_multiply(const Quat& a, const Quat& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Mat3 quat_to_matrix(const Quat& raw) {
  const Quat q = normalize_quat(raw);
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Quat matrix_to_quat(const Mat3& r) {
  const Eigen::Quaterniond q(r);
  return normalize_quat(Quat(q.w(), q.x(), q.y(), q.z()));
}

Mat3 build_covariance(const Vec3& log_scale, const Quat& rotation) {
  if (!log_scale.allFinite() || !rotation.allFinite())
    throw std::invalid_argument("build_covariance: non-finite input");
  const Mat3 r = quat_to_matrix(rotation);
  const Vec3 s2 = (2.0 * log_scale).array().exp();
  Mat3 cov = r * s2.asDiagonal() * r.transpose();
  return 0.5 * (cov + cov.transpose());
}

Vec3 sh_to_color(const Vec3& sh) {
  return (0.5 + kShC0 * sh.array()).min(1.0).max(0.0).matrix();
}

Vec3 color_to_sh(const Vec3& rgb) { return (rgb.array() - 0.5) / kShC0; }

namespace {

Quat renormalize_if_drifted(const Quat& q) {
  return std::abs(q.norm() - 1.0) > 1e-12 ? normalize_quat(q) : q;
}

}  // namespace

GaussianCloud transform_cloud(const GaussianCloud& cloud, const Se3Pose& transform) {
  GaussianCloud out = cloud;
  if (transform == Se3Pose::identity()) return out;
  const Quat qt = matrix_to_quat(transform.rotation);
  const Mat3& r = transform.rotation;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out.positions[i] = transform.apply(cloud.positions[i]);
    out.rotations[i] = renormalize_if_drifted(quat_multiply(qt, cloud.rotations[i]));
  }
  auto& d = out.deformation;
  if (d.basis_count != 0 && !transform.rotation.isIdentity(0.0)) {
    const std::size_t rows = cloud.size() * d.basis_count;
    for (std::size_t k = 0; k < rows; ++k) {
      double* w = d.weights.data() + k * kDeformDims;
      Eigen::Map<Vec3> wp(w + kDeformPos);
      wp = (r * wp).eval();
      Eigen::Map<Vec4> wr(w + kDeformRot);
      wr = quat_multiply(qt, Quat(wr));
    }
  }
  return out;
}

}  // namespace dygs
