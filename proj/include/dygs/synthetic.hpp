#pragma once

#include "dygs/frame.hpp"
#include "dygs/metrics.hpp"
#include "dygs/scene_model.hpp"

#include <cstdint>
#include <vector>

namespace dygs {

/// Procedural RGBD sequence: a textured height-field surface covered by
/// Gaussians, a breathing deformation along the surface normal and a camera
/// moving on an arc while looking at a fixed target.
struct SynthConfig {
  // Camera.
  int width = 96;
  int height = 72;
  double fx = 80.0;
  double fy = 80.0;
  double cx = 47.5;
  double cy = 35.5;
  double near = 0.01;

  // Surface: z = height_amplitude * sin(2 pi f x) * cos(2 pi f y) over an extent_x by extent_y patch
  // centered at the world origin.
  int gaussian_count = 40000;
  double extent_x = 0.4;
  double extent_y = 0.3;
  double height_amplitude = 0.01;
  double height_frequency = 6.0;      // cycles per meter
  double texture_frequency = 25.0;    // cycles per meter
  double opacity = 0.95;

  // Breathing: A sin(2 pi f t + phase) * envelope(x, y) * n.
  double breathing_amplitude = 0.0;   // meters
  double breathing_frequency = 0.5;   // Hz
  double breathing_phase = 0.0;
  double breathing_radius = 0.0;      // Gaussian envelope radius about the origin in meters; 0 means uniform

  // Trajectory: arc of the given radius about the y-parallel axis through
  // `target`, always looking at `target`; the middle frame looks straight down.
  double arc_radius = 0.3;
  double arc_span = 0.2;              // radians
  double target_x = 0.0;
  double target_y = 0.0;
  double target_z = -0.2;

  int frame_count = 10;
  double fps = 30.0;

  double depth_noise = 0.0;           // meters
  double color_noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticSequence {
  Dataset dataset;
  Trajectory gt_trajectory;  // world-to-camera
  GaussianCloud gt_cloud;    // canonical (undeformed) cloud
  std::vector<Vec3> normals;
  std::vector<double> envelope;
  SynthConfig config;

  /// Ground-truth cloud at time t.
  [[nodiscard]] GaussianCloud cloud_at(double t) const;
};

/// Camera-to-world look-at pose with image y pointing along -world y.
Se3Pose look_at_camera_to_world(const Vec3& eye, const Vec3& target);

/// World-to-camera pose of frame `index` on the configured arc.
Se3Pose synth_camera_pose(const SynthConfig& cfg, int index);

CameraIntrinsics synth_intrinsics(const SynthConfig& cfg);

/// Renders one RGBD observation of `cloud` under `pose`: depth is the
/// alpha-normalized rendered depth where accumulated alpha >= 0.5, else 0.
FrameObservation render_observation(const GaussianCloud& cloud, const Se3Pose& pose,
                                    const CameraIntrinsics& intrinsics, double timestamp);

SyntheticSequence generate_sequence(const SynthConfig& cfg);

}  // namespace dygs
