#include "dygs/pose_dynamics.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace dygs {

namespace {

constexpr double kSmallAngle = 1e-8;
constexpr double kMaxLogAngle = std::numbers::pi - 1e-6;

// Coefficients of the left Jacobian V = I + b [phi]x + c [phi]x^2.
void v_coefficients(double theta, double& a, double& b, double& c) {
  const double t2 = theta * theta;
  if (theta < kSmallAngle) {
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / t2;
    c = (theta - std::sin(theta)) / (t2 * theta);
  }
}

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& phi) {
  double a, b, c;
  v_coefficients(phi.norm(), a, b, c);
  const Mat3 k = skew(phi);
  return Mat3::Identity() + a * k + b * k * k;
}

Vec3 so3_log(const Mat3& r) {
  const Vec3 axis_sin(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double s = 0.5 * axis_sin.norm();
  const double c = 0.5 * (r.trace() - 1.0);
  const double theta = std::atan2(s, c);
  if (theta > kMaxLogAngle)
    throw NumericalError("so3_log: rotation angle " + std::to_string(theta) + " too close to pi");
  const double factor = theta < kSmallAngle ? 0.5 + theta * theta / 12.0 : 0.5 * theta / std::sin(theta);
  return factor * axis_sin;
}

Se3Pose se3_exp(const Tangent& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 phi = xi.tail<3>();
  double a, b, c;
  v_coefficients(phi.norm(), a, b, c);
  const Mat3 k = skew(phi);
  const Mat3 k2 = k * k;
  Se3Pose out;
  out.rotation = Mat3::Identity() + a * k + b * k2;
  out.translation = (Mat3::Identity() + b * k + c * k2) * rho;
  return out;
}

Tangent se3_log(const Se3Pose& pose) {
  const Vec3 phi = so3_log(pose.rotation);
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  double coeff;
  if (theta < 1e-4) {
    const double t2 = theta * theta;
    coeff = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    coeff = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / (theta * theta);
  }
  const Mat3 v_inv = Mat3::Identity() - 0.5 * k + coeff * k * k;
  Tangent xi;
  xi.head<3>() = v_inv * pose.translation;
  xi.tail<3>() = phi;
  return xi;
}

Se3Pose apply_pose_update(const Se3Pose& pose, const Tangent& step) {
  Se3Pose out = se3_exp(step) * pose;
  out.reorthonormalize();
  return out;
}

void PoseHistory::push(double timestamp, const Se3Pose& pose) {
  if (!poses_.empty() && !(timestamp > poses_.back().timestamp))
    throw std::invalid_argument("PoseHistory: timestamps must strictly increase");
  poses_.push_back({timestamp, pose});
  while (poses_.size() > capacity_) poses_.pop_front();
}

Se3Pose extrapolate_pose(const PoseHistory& history, int window) {
  if (history.empty()) return Se3Pose::identity();
  const auto l_count = static_cast<std::size_t>(window < 1 ? 1 : window);
  if (history.size() < 2 * l_count) return history.back();
  Tangent sum = Tangent::Zero();
  for (std::size_t l = 1; l <= l_count; ++l) {
    const Se3Pose& recent = history.back(l - 1);
    const Se3Pose& older = history.back(l - 1 + l_count);
    sum += se3_log(recent * older.inverse());
  }
  const double norm = static_cast<double>(l_count * l_count);
  Se3Pose predicted = se3_exp(sum / norm) * history.back();
  predicted.reorthonormalize();
  return predicted;
}

}  // namespace dygs
