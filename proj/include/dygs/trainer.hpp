#pragma once

#include "dygs/deformation.hpp"
#include "dygs/frame.hpp"
#include "dygs/loss.hpp"
#include "dygs/optimizer.hpp"
#include "dygs/parameterizer.hpp"
#include "dygs/pose_dynamics.hpp"
#include "dygs/rasterizer.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dygs {

struct TrainConfig {
  int joint_iterations = 10;        // K
  int retro_count = 40;             // frames sampled per retrospective phase
  int retro_window = 100;           // omega
  int segment_length = 100;         // kappa
  double expansion_delta = 0.8;     // delta
  double lambda_g_depth = 0.002;
  double lambda_jl_depth = 0.002;
  double lambda_jl_reg = 0.01;
  double lambda_rl_depth = 0.002;
  double lr_deformation = 4e-5;     // position weights: times the segment's scene extent
  double lr_rotation = 1e-3;
  double lr_translation = 0.15;     // in length units
  /// Meters per length unit for lr_translation, the depth loss terms and the
  /// movement regularizer.
  double length_unit = 1e-3;
  int basis_count = 20;             // B
  int active_half_width = 4;        // m
  int velocity_window = 3;          // L
  int stride = 4;
  int refine_iterations = 100;      // at initialization and expansion; 0 disables
  RefineSettings refine;
  ParameterizerDefaults parameterizer;
  std::uint64_t seed = 0;

  bool joint_learning = true;       // false: pose-only then deformation-only, K split between them
  /// false: the retro_count deformation steps all use the current frame.
  bool retrospective = true;
  bool partial_activation = true;
  bool refresh_expansion_mask = true;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// Raised when a loss becomes non-finite.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& what, int frame, int iteration)
      : std::runtime_error(what), frame_(frame), iteration_(iteration) {}
  [[nodiscard]] int frame() const { return frame_; }
  [[nodiscard]] int iteration() const { return iteration_; }

 private:
  int frame_;
  int iteration_;
};

/// Adam moments for a segment's deformation parameters, with one step counter
/// per basis index (a basis only advances when it is updated).
struct DeformationOptimizer {
  std::vector<double> m_tau, v_tau, m_sigma, v_sigma, m_w, v_w;
  std::vector<long> basis_steps;

  void resize(std::size_t points, int basis_count);
};

struct ModelSegment {
  GaussianCloud cloud;
  int frame_begin = 0;  // [frame_begin, frame_end)
  int frame_end = 0;
  double t_begin = 0.0;
  double t_end = 0.0;
  double scene_extent = 1.0;  // meters; largest distance of the initial Gaussians from their centroid
  DeformationOptimizer optimizer;
};

struct FrameLog {
  int frame = 0;
  double timestamp = 0.0;
  double joint_loss_first = 0.0;
  double joint_loss_last = 0.0;
  double retro_loss_mean = 0.0;
  std::size_t gaussians_added = 0;
  std::size_t gaussians_total = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  Se3Pose pose;
};

struct ReconstructionState {
  std::vector<ModelSegment> segments;
  std::vector<double> timestamps;
  std::vector<Se3Pose> trajectory;  // world-to-camera, one per processed frame
  PoseHistory history{6};
  std::mt19937_64 rng;
  std::vector<FrameLog> logs;
  std::uint64_t deformation_updates = 0;  // scalar deformation parameter updates

  /// Index of the segment whose time range contains t.
  [[nodiscard]] std::size_t segment_for_time(double t) const;
};

/// Result of one joint-learning run on a frame.
struct JointResult {
  Se3Pose pose;
  std::vector<double> losses;  // loss at each iteration, before the update
};

/// Psi = || mean of position offsets at time t ||^2.
struct RegularizerValue {
  double value = 0.0;
  Vec3 mean_offset = Vec3::Zero();
};
RegularizerValue movement_regularizer(const GaussianCloud& cloud, double t);

/// Applies one sparse Adam step to the active bases of `cloud`'s deformation:
/// position weights use `position_lr`, every other parameter `lr`.
/// Returns the number of scalar parameters updated.
std::uint64_t deformation_adam_step(GaussianCloud& cloud, DeformationOptimizer& opt, const DeformationGradients& grads,
                                    double lr, double position_lr);

/// K iterations of pose (+ deformation, unless `update_deformation` is false)
/// optimization against one frame.
JointResult joint_learning(const FrameObservation& frame, ModelSegment& segment, const Se3Pose& initial_pose,
                           const TrainConfig& config, bool update_pose = true, bool update_deformation = true,
                           std::uint64_t* update_counter = nullptr, int frame_index = -1);

/// Deformation-only updates on frames drawn uniformly (with replacement) from
/// the trailing window ending at `current`. Returns the mean loss.
double retrospective_learning(ReconstructionState& state, ModelSegment& segment, const Dataset& dataset,
                              int current, const TrainConfig& config);

/// Indices drawn by the retrospective sampler (exposed for testing).
std::vector<int> sample_retrospective_indices(std::mt19937_64& rng, int current, int segment_begin, int window,
                                              int count);

using ProgressCallback = std::function<void(const FrameLog&)>;

/// Frame-by-frame reconstruction driver.
class Reconstructor {
 public:
  Reconstructor(const Dataset& dataset, TrainConfig config);

  /// Processes the next frame; returns false when the sequence is exhausted.
  bool step();
  void run(const ProgressCallback& progress = {});

  [[nodiscard]] const ReconstructionState& state() const { return state_; }
  ReconstructionState& state() { return state_; }
  [[nodiscard]] int frames_processed() const { return next_; }

 private:
  void initialize_segment(int frame_index, const Se3Pose& pose);
  FrameLog log_frame(int frame_index, const JointResult* joint, double retro_loss, std::size_t added);

  const Dataset& dataset_;
  TrainConfig config_;
  ReconstructionState state_;
  std::vector<std::pair<int, int>> segment_ranges_;
  int next_ = 0;
};

/// Runs the whole sequence. Throws std::invalid_argument on an empty dataset.
ReconstructionState reconstruct_sequence(const Dataset& dataset, const TrainConfig& config,
                                         const ProgressCallback& progress = {});

/// Renders the reconstruction at time t under a world-to-camera pose.
RenderOutput render_state(const ReconstructionState& state, double t, const Se3Pose& pose,
                          const CameraIntrinsics& intrinsics);

}  // namespace dygs
