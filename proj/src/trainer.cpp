#include "dygs/trainer.hpp"

#include "dygs/metrics.hpp"
#include "dygs/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dygs {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
  };
  require(joint_iterations >= 1, "joint_iterations must be >= 1");
  require(retro_count >= 0, "retro_count must be >= 0");
  require(retro_window >= 1, "retro_window must be >= 1");
  require(segment_length >= 1, "segment_length must be >= 1");
  require(expansion_delta > 0.0 && expansion_delta <= 1.0, "expansion_delta must lie in (0, 1]");
  require(lambda_g_depth >= 0.0 && lambda_jl_depth >= 0.0 && lambda_jl_reg >= 0.0 && lambda_rl_depth >= 0.0,
          "loss weights must be non-negative");
  require(lr_deformation > 0.0 && lr_rotation > 0.0 && lr_translation > 0.0, "learning rates must be positive");
  require(basis_count >= 2, "basis_count must be >= 2");
  require(active_half_width >= 1, "active_half_width must be >= 1");
  require(velocity_window >= 1, "velocity_window must be >= 1");
  require(stride >= 1, "stride must be >= 1");
  require(refine_iterations >= 0, "refine_iterations must be >= 0");
  require(length_unit > 0.0, "length_unit must be positive");
}

void DeformationOptimizer::resize(std::size_t points, int basis_count) {
  const std::size_t rows = points * static_cast<std::size_t>(basis_count);
  m_tau.resize(rows, 0.0);
  v_tau.resize(rows, 0.0);
  m_sigma.resize(rows, 0.0);
  v_sigma.resize(rows, 0.0);
  m_w.resize(rows * kDeformDims, 0.0);
  v_w.resize(rows * kDeformDims, 0.0);
  basis_steps.resize(static_cast<std::size_t>(basis_count), 0);
}

std::size_t ReconstructionState::segment_for_time(double t) const {
  if (segments.empty()) throw std::logic_error("segment_for_time: no segments");
  for (std::size_t s = 1; s < segments.size(); ++s)
    if (t < segments[s].t_begin) return s - 1;
  return segments.size() - 1;
}

RegularizerValue movement_regularizer(const GaussianCloud& cloud, double t) {
  RegularizerValue out;
  const std::size_t n = cloud.size();
  if (n == 0 || cloud.deformation.basis_count == 0) return out;
  Vec3 sum = Vec3::Zero();
  double off[kDeformDims];
  for (std::size_t i = 0; i < n; ++i) {
    deformation_offsets(cloud.deformation, i, t, off);
    sum += Vec3(off[kDeformPos], off[kDeformPos + 1], off[kDeformPos + 2]);
  }
  out.mean_offset = sum / static_cast<double>(n);
  out.value = out.mean_offset.squaredNorm();
  return out;
}

std::uint64_t deformation_adam_step(GaussianCloud& cloud, DeformationOptimizer& opt, const DeformationGradients& grads,
                                    double lr, double position_lr) {
  auto& params = cloud.deformation;
  const std::size_t n = cloud.size();
  const int b = params.basis_count;
  if (b == 0 || grads.active.empty() || n == 0) return 0;
  opt.resize(n, b);
  const std::size_t a = grads.active.size();
  for (const int j : grads.active) ++opt.basis_steps[j];
  parallel_for(n, 256, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t s = 0; s < a; ++s) {
        const int j = grads.active[s];
        const long step = opt.basis_steps[j];
        const std::size_t row = i * b + j;
        const std::size_t grow = i * a + s;
        adam_update(params.taus[row], opt.m_tau[row], opt.v_tau[row], grads.taus[grow], lr, step);
        adam_update(params.log_sigmas[row], opt.m_sigma[row], opt.v_sigma[row], grads.log_sigmas[grow], lr, step);
        for (int d = 0; d < kDeformDims; ++d)
          adam_update(params.weights[row * kDeformDims + d], opt.m_w[row * kDeformDims + d],
                      opt.v_w[row * kDeformDims + d], grads.weights[grow * kDeformDims + d],
                      d < kDeformPos + 3 ? position_lr : lr, step);
      }
    }
  });
  return static_cast<std::uint64_t>(n) * a * (2 + kDeformDims);
}

namespace {

ActiveSet active_for(const GaussianCloud& cloud, double t, const TrainConfig& config) {
  const auto& p = cloud.deformation;
  if (!config.partial_activation) return all_indices(p.basis_count);
  return active_indices(t - p.t_origin, p.basis_count, config.active_half_width, p.t_span);
}

double cloud_extent(const GaussianCloud& cloud) {
  if (cloud.empty()) return 1.0;
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : cloud.positions) centroid += p;
  centroid /= static_cast<double>(cloud.size());
  double extent = 0.0;
  for (const Vec3& p : cloud.positions) extent = std::max(extent, (p - centroid).norm());
  return extent > 0.0 ? extent : 1.0;
}

void check_finite(double loss, int frame, int iteration, const char* phase) {
  if (!std::isfinite(loss))
    throw DivergedError(std::string(phase) + " loss became non-finite at frame " + std::to_string(frame) +
                            ", iteration " + std::to_string(iteration),
                        frame, iteration);
}

}  // namespace

JointResult joint_learning(const FrameObservation& frame, ModelSegment& segment, const Se3Pose& initial_pose,
                           const TrainConfig& config, bool update_pose, bool update_deformation,
                           std::uint64_t* update_counter, int frame_index) {
  JointResult result;
  result.pose = initial_pose;
  const double t = frame.timestamp;
  const ActiveSet active = active_for(segment.cloud, t, config);
  AdamState pose_adam;
  pose_adam.resize(6);
  Vec6 tangent = Vec6::Zero();
  Mask expansion;

  for (int k = 0; k < config.joint_iterations; ++k) {
    const GaussianCloud deformed = apply_deformation(segment.cloud, t);
    const Rasterizer raster(deformed, result.pose, frame.intrinsics);
    const RenderOutput out = raster.forward();
    if (k == 0 || config.refresh_expansion_mask) expansion = compute_expansion_mask(out.alpha, config.expansion_delta);
    Mask covered(expansion.width, expansion.height, false);
    for (std::size_t p = 0; p < covered.data.size(); ++p)
      covered.data[p] = (!expansion.data[p] && frame.instrument_mask.data[p]) ? 1 : 0;

    PhotometricLoss loss = photometric_loss(out, frame, covered, config.lambda_jl_depth / config.length_unit);
    const RegularizerValue reg = movement_regularizer(segment.cloud, t);
    const double reg_weight = config.lambda_jl_reg / (config.length_unit * config.length_unit);
    const double total = loss.value + reg_weight * reg.value;
    check_finite(total, frame_index, k, "joint-learning");
    result.losses.push_back(total);

    RenderGradients grads = raster.backward(loss.grad, update_pose);

    if (update_pose) {
      // Adam on the tangent; the gradient is taken at the current pose (left perturbation).
      const Vec6 before = tangent;
      ++pose_adam.step;
      for (int d = 0; d < 6; ++d) {
        const double lr = d < 3 ? config.lr_translation * config.length_unit : config.lr_rotation;
        adam_update(tangent[d], pose_adam.m[d], pose_adam.v[d], grads.pose[d], lr, pose_adam.step);
      }
      result.pose = apply_pose_update(result.pose, tangent - before);
    }

    if (update_deformation && !active.empty()) {
      if (reg_weight > 0.0 && !segment.cloud.empty()) {
        const Vec3 g = reg_weight * 2.0 * reg.mean_offset / static_cast<double>(segment.cloud.size());
        for (auto& p : grads.positions) p += g;
      }
      const DeformationGradients dgrads = deformation_backward(segment.cloud, t, grads, active);
      const auto updated = deformation_adam_step(segment.cloud, segment.optimizer, dgrads, config.lr_deformation,
                                                 config.lr_deformation * segment.scene_extent);
      if (update_counter) *update_counter += updated;
    }
  }
  return result;
}

std::vector<int> sample_retrospective_indices(std::mt19937_64& rng, int current, int segment_begin, int window,
                                              int count) {
  const int lo = std::max(current - window + 1, segment_begin);
  std::uniform_int_distribution<int> dist(lo, current);
  std::vector<int> out(static_cast<std::size_t>(std::max(count, 0)));
  for (auto& v : out) v = dist(rng);
  return out;
}

double retrospective_learning(ReconstructionState& state, ModelSegment& segment, const Dataset& dataset, int current,
                              const TrainConfig& config) {
  const auto picks =
      sample_retrospective_indices(state.rng, current, segment.frame_begin, config.retro_window, config.retro_count);
  double loss_sum = 0.0;
  for (std::size_t r = 0; r < picks.size(); ++r) {
    const int j = picks[r];
    const FrameObservation& frame = dataset.frames[j];
    const double t = frame.timestamp;
    const GaussianCloud deformed = apply_deformation(segment.cloud, t);
    const Rasterizer raster(deformed, state.trajectory[j], frame.intrinsics);
    const RenderOutput out = raster.forward();
    const PhotometricLoss loss =
        photometric_loss(out, frame, frame.instrument_mask, config.lambda_rl_depth / config.length_unit);
    check_finite(loss.value, current, static_cast<int>(r), "retrospective");
    loss_sum += loss.value;
    const RenderGradients grads = raster.backward(loss.grad, false);
    const ActiveSet active = active_for(segment.cloud, t, config);
    const DeformationGradients dgrads = deformation_backward(segment.cloud, t, grads, active);
    state.deformation_updates += deformation_adam_step(segment.cloud, segment.optimizer, dgrads, config.lr_deformation,
                                                       config.lr_deformation * segment.scene_extent);
  }
  return picks.empty() ? 0.0 : loss_sum / static_cast<double>(picks.size());
}

Reconstructor::Reconstructor(const Dataset& dataset, TrainConfig config)
    : dataset_(dataset), config_(std::move(config)) {
  config_.validate();
  if (dataset.frames.empty()) throw std::invalid_argument("reconstruct: dataset has no frames");
  state_.rng.seed(config_.seed);
  state_.history = PoseHistory(2 * static_cast<std::size_t>(config_.velocity_window));
  const int n = static_cast<int>(dataset.frames.size());
  for (int b = 0; b < n; b += config_.segment_length)
    segment_ranges_.emplace_back(b, std::min(n, b + config_.segment_length));
}

void Reconstructor::initialize_segment(int frame_index, const Se3Pose& pose) {
  const auto range = segment_ranges_[state_.segments.size()];
  const FrameObservation& frame = dataset_.frames[frame_index];
  ModelSegment seg;
  seg.frame_begin = range.first;
  seg.frame_end = range.second;
  seg.t_begin = dataset_.frames[range.first].timestamp;
  seg.t_end = dataset_.frames[range.second - 1].timestamp;
  const double span = seg.t_end > seg.t_begin ? seg.t_end - seg.t_begin : 1.0;

  GaussianCloud camera_cloud = parameterize_frame(frame, config_.stride, config_.parameterizer);
  RefineSettings refine = config_.refine;
  refine.lambda_depth = config_.lambda_g_depth / config_.length_unit;
  refine_parameters(camera_cloud, frame, config_.refine_iterations, refine);
  seg.cloud = transform_cloud(camera_cloud, pose.inverse());
  seg.scene_extent = cloud_extent(seg.cloud);
  seg.cloud.deformation = init_deformation(config_.basis_count, span, seg.cloud.size(), seg.t_begin);
  seg.optimizer.resize(seg.cloud.size(), config_.basis_count);
  state_.segments.push_back(std::move(seg));
}

FrameLog Reconstructor::log_frame(int frame_index, const JointResult* joint, double retro_loss, std::size_t added) {
  const FrameObservation& frame = dataset_.frames[frame_index];
  const ModelSegment& seg = state_.segments.back();
  FrameLog log;
  log.frame = frame_index;
  log.timestamp = frame.timestamp;
  if (joint && !joint->losses.empty()) {
    log.joint_loss_first = joint->losses.front();
    log.joint_loss_last = joint->losses.back();
  }
  log.retro_loss_mean = retro_loss;
  log.gaussians_added = added;
  log.gaussians_total = seg.cloud.size();
  log.pose = state_.trajectory.back();
  const RenderOutput out = render(apply_deformation(seg.cloud, frame.timestamp), log.pose, frame.intrinsics);
  try {
    log.psnr = psnr(out.color, frame.rgb, &frame.instrument_mask);
  } catch (const MetricError&) {
    log.psnr = 0.0;
  }
  log.ssim = frame.rgb.width >= 11 && frame.rgb.height >= 11 ? ssim(out.color, frame.rgb) : 0.0;
  return log;
}

bool Reconstructor::step() {
  const int n = static_cast<int>(dataset_.frames.size());
  if (next_ >= n) return false;
  const int i = next_;
  const FrameObservation& frame = dataset_.frames[i];
  frame.validate();

  if (i == 0) {
    const Se3Pose initial =
        (!dataset_.gt_poses.empty() && dataset_.gt_poses[0]) ? *dataset_.gt_poses[0] : Se3Pose::identity();
    initialize_segment(0, initial);
    state_.timestamps.push_back(frame.timestamp);
    state_.trajectory.push_back(initial);
    state_.history.push(frame.timestamp, initial);
    state_.logs.push_back(log_frame(0, nullptr, 0.0, 0));
    ++next_;
    return true;
  }

  // Until 2L poses exist, predict with the widest window the history supports.
  const int window = std::min(config_.velocity_window, static_cast<int>(state_.history.size() / 2));
  const Se3Pose predicted = window >= 1 ? extrapolate_pose(state_.history, window) : state_.history.back();
  const bool new_segment = i == segment_ranges_[state_.segments.size() - 1].second;

  if (new_segment) {
    // Track against the previous model with its deformation frozen, then start
    // a fresh model from this frame.
    ModelSegment& prev = state_.segments.back();
    const JointResult joint = joint_learning(frame, prev, predicted, config_, true, false, nullptr, i);
    initialize_segment(i, joint.pose);
    state_.timestamps.push_back(frame.timestamp);
    state_.trajectory.push_back(joint.pose);
    state_.history.push(frame.timestamp, joint.pose);
    state_.logs.push_back(log_frame(i, &joint, 0.0, 0));
    ++next_;
    return true;
  }

  ModelSegment& seg = state_.segments.back();
  JointResult joint;
  if (config_.joint_learning) {
    joint = joint_learning(frame, seg, predicted, config_, true, true, &state_.deformation_updates, i);
  } else {
    // Same per-frame budget as joint learning: pose first, then deformation.
    TrainConfig pose_stage = config_;
    pose_stage.joint_iterations = (config_.joint_iterations + 1) / 2;
    TrainConfig deform_stage = config_;
    deform_stage.joint_iterations = config_.joint_iterations / 2;
    joint = joint_learning(frame, seg, predicted, pose_stage, true, false, nullptr, i);
    JointResult deform;
    if (deform_stage.joint_iterations > 0)
      deform = joint_learning(frame, seg, joint.pose, deform_stage, false, true, &state_.deformation_updates, i);
    joint.losses.insert(joint.losses.end(), deform.losses.begin(), deform.losses.end());
  }
  state_.timestamps.push_back(frame.timestamp);
  state_.trajectory.push_back(joint.pose);
  state_.history.push(frame.timestamp, joint.pose);

  // Scene expansion under the refined pose.
  const RenderOutput coverage = render(apply_deformation(seg.cloud, frame.timestamp), joint.pose, frame.intrinsics);
  const Mask unseen = mask_and(compute_expansion_mask(coverage.alpha, config_.expansion_delta), frame.instrument_mask);
  ExpansionSettings expansion;
  expansion.stride = config_.stride;
  expansion.refine_iterations = config_.refine_iterations;
  expansion.refine = config_.refine;
  expansion.refine.lambda_depth = config_.lambda_g_depth / config_.length_unit;
  expansion.defaults = config_.parameterizer;
  const std::size_t added = expand_scene(seg.cloud, frame, unseen, joint.pose.inverse(), expansion);
  if (added > 0) seg.optimizer.resize(seg.cloud.size(), seg.cloud.deformation.basis_count);

  double retro_loss = 0.0;
  if (config_.retro_count > 0) {
    if (config_.retrospective) {
      retro_loss = retrospective_learning(state_, seg, dataset_, i, config_);
    } else {
      // Same number of deformation steps, all on the current frame.
      TrainConfig current_only = config_;
      current_only.retro_window = 1;
      retro_loss = retrospective_learning(state_, seg, dataset_, i, current_only);
    }
  }

  state_.logs.push_back(log_frame(i, &joint, retro_loss, added));
  ++next_;
  return true;
}

void Reconstructor::run(const ProgressCallback& progress) {
  while (step())
    if (progress) progress(state_.logs.back());
}

ReconstructionState reconstruct_sequence(const Dataset& dataset, const TrainConfig& config,
                                         const ProgressCallback& progress) {
  Reconstructor rec(dataset, config);
  rec.run(progress);
  return std::move(rec.state());
}

RenderOutput render_state(const ReconstructionState& state, double t, const Se3Pose& pose,
                          const CameraIntrinsics& intrinsics) {
  const ModelSegment& seg = state.segments[state.segment_for_time(t)];
  return render(apply_deformation(seg.cloud, t), pose, intrinsics);
}

}  // namespace dygs
