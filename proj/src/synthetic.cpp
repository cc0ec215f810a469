#include "dygs/synthetic.hpp"

#include "dygs/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace dygs {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double surface_height(const SynthConfig& c, double x, double y) {
  return c.height_amplitude * std::sin(kTwoPi * c.height_frequency * x) * std::cos(kTwoPi * c.height_frequency * y);
}

Vec3 surface_normal(const SynthConfig& c, double x, double y) {
  const double k = kTwoPi * c.height_frequency;
  const double dhdx = c.height_amplitude * k * std::cos(k * x) * std::cos(k * y);
  const double dhdy = -c.height_amplitude * k * std::sin(k * x) * std::sin(k * y);
  return Vec3(-dhdx, -dhdy, 1.0).normalized();
}

Vec3 surface_color(const SynthConfig& c, double x, double y) {
  const double f = kTwoPi * c.texture_frequency;
  const double r = 0.62 + 0.18 * std::sin(f * x) * std::cos(0.7 * f * y) + 0.08 * std::sin(0.31 * f * (x + y));
  const double g = 0.38 + 0.14 * std::cos(0.8 * f * x + 1.0) * std::sin(f * y) + 0.06 * std::cos(0.23 * f * y);
  const double b = 0.34 + 0.10 * std::sin(0.6 * f * (x - y)) + 0.05 * std::cos(0.4 * f * x);
  return Vec3(r, g, b).cwiseMax(0.02).cwiseMin(0.98);
}

// Quaternion rotating +z onto n.
Quat align_z_to(const Vec3& n) {
  const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), n);
  return Quat(q.w(), q.x(), q.y(), q.z());
}

}  // namespace

void SynthConfig::validate() const {
  if (frame_count < 1) throw std::invalid_argument("synth: frame_count must be >= 1");
  if (breathing_amplitude < 0.0 || height_amplitude < 0.0) throw std::invalid_argument("synth: amplitudes must be >= 0");
  if (gaussian_count < 1) throw std::invalid_argument("synth: gaussian_count must be >= 1");
  if (!(fps > 0.0)) throw std::invalid_argument("synth: fps must be positive");
  if (!(opacity > 0.0 && opacity < 1.0)) throw std::invalid_argument("synth: opacity must lie in (0, 1)");
  synth_intrinsics(*this).validate();
}

CameraIntrinsics synth_intrinsics(const SynthConfig& cfg) {
  return CameraIntrinsics{cfg.fx, cfg.fy, cfg.cx, cfg.cy, cfg.width, cfg.height, cfg.near};
}

Se3Pose look_at_camera_to_world(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 down_hint(0.0, -1.0, 0.0);
  Vec3 down = down_hint - down_hint.dot(forward) * forward;
  if (down.norm() < 1e-9) down = Vec3::UnitX() - Vec3::UnitX().dot(forward) * forward;
  down.normalize();
  const Vec3 right = down.cross(forward);
  Se3Pose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = forward;
  pose.translation = eye;
  return pose;
}

Se3Pose synth_camera_pose(const SynthConfig& cfg, int index) {
  const double u = cfg.frame_count > 1 ? static_cast<double>(index) / (cfg.frame_count - 1) : 0.0;
  const double theta = cfg.arc_span * (u - 0.5);
  const Vec3 target(cfg.target_x, cfg.target_y, cfg.target_z);
  const Vec3 eye = target + cfg.arc_radius * Vec3(std::sin(theta), 0.0, std::cos(theta));
  return look_at_camera_to_world(eye, target).inverse();
}

FrameObservation render_observation(const GaussianCloud& cloud, const Se3Pose& pose,
                                    const CameraIntrinsics& intrinsics, double timestamp) {
  const RenderOutput out = render_reference(cloud, pose, intrinsics);
  FrameObservation frame;
  frame.timestamp = timestamp;
  frame.intrinsics = intrinsics;
  frame.rgb = out.color;
  frame.depth = Image(intrinsics.width, intrinsics.height, 1);
  frame.instrument_mask = Mask(intrinsics.width, intrinsics.height, true);
  for (int y = 0; y < intrinsics.height; ++y)
    for (int x = 0; x < intrinsics.width; ++x) {
      const double a = out.alpha.at(x, y);
      frame.depth.at(x, y) = a >= 0.5 ? out.depth.at(x, y) / a : 0.0;
    }
  return frame;
}

GaussianCloud SyntheticSequence::cloud_at(double t) const {
  const SynthConfig& c = config;
  GaussianCloud cloud = gt_cloud;
  if (c.breathing_amplitude == 0.0) return cloud;
  const double s = c.breathing_amplitude * std::sin(kTwoPi * c.breathing_frequency * t + c.breathing_phase);
  for (std::size_t i = 0; i < cloud.size(); ++i) cloud.positions[i] += s * envelope[i] * normals[i];
  return cloud;
}

SyntheticSequence generate_sequence(const SynthConfig& cfg) {
  cfg.validate();
  SyntheticSequence seq;
  seq.config = cfg;
  std::mt19937_64 rng(cfg.seed);

  const double area = cfg.extent_x * cfg.extent_y;
  const double spacing = std::sqrt(area / cfg.gaussian_count);
  const int nx = std::max(1, static_cast<int>(std::round(cfg.extent_x / spacing)));
  const int ny = std::max(1, static_cast<int>(std::round(cfg.extent_y / spacing)));
  std::uniform_real_distribution<double> jitter(-0.25 * spacing, 0.25 * spacing);
  seq.gt_cloud.reserve(static_cast<std::size_t>(nx) * ny);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double x = -0.5 * cfg.extent_x + (ix + 0.5) * spacing + jitter(rng);
      const double y = -0.5 * cfg.extent_y + (iy + 0.5) * spacing + jitter(rng);
      const Vec3 n = surface_normal(cfg, x, y);
      const Vec3 p(x, y, surface_height(cfg, x, y));
      const Vec3 log_scale(std::log(0.75 * spacing), std::log(0.75 * spacing), std::log(0.15 * spacing));
      seq.gt_cloud.push_back(p, log_scale, align_z_to(n), color_to_sh(surface_color(cfg, x, y)), logit(cfg.opacity));
      seq.normals.push_back(n);
      double env = 1.0;
      if (cfg.breathing_radius > 0.0) {
        env = std::exp(-(x * x + y * y) / (2.0 * cfg.breathing_radius * cfg.breathing_radius));
      }
      seq.envelope.push_back(env);
    }
  }

  const CameraIntrinsics k = synth_intrinsics(cfg);
  Dataset& ds = seq.dataset;
  ds.intrinsics = k;
  ds.t_max = (cfg.frame_count - 1) / cfg.fps;
  std::normal_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < cfg.frame_count; ++i) {
    const double t = i / cfg.fps;
    const Se3Pose pose = synth_camera_pose(cfg, i);
    FrameObservation frame = render_observation(seq.cloud_at(t), pose, k, t);
    if (cfg.color_noise > 0.0)
      for (double& v : frame.rgb.data) v = std::clamp(v + cfg.color_noise * unit(rng), 0.0, 1.0);
    if (cfg.depth_noise > 0.0)
      for (double& v : frame.depth.data)
        if (v > 0.0) v = std::max(1e-6, v + cfg.depth_noise * unit(rng));
    ds.frames.push_back(std::move(frame));
    ds.gt_poses.emplace_back(pose);
    seq.gt_trajectory.timestamps.push_back(t);
    seq.gt_trajectory.poses.push_back(pose);
  }
  return seq;
}

}  // namespace dygs
