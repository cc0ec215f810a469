#pragma once

#include "dygs/frame.hpp"
#include "dygs/rasterizer.hpp"
#include "dygs/scene_model.hpp"

#include <functional>
#include <vector>

namespace dygs {

/// Defaults for the deterministic pixel-aligned parameterization.
struct ParameterizerDefaults {
  double opacity = 0.5;
  /// Multiplier on the stride footprint used as the isotropic scale.
  double scale_factor = 1.0;
};

/// Downsampled per-pixel attribute grids (stride s) that define one Gaussian per
/// valid cell. Corrections start at zero.
struct AttributeMaps {
  int stride = 1;
  int grid_width = 0;
  int grid_height = 0;
  std::vector<Vec2> pixel;           // u: sample location in pixel coordinates
  std::vector<Vec3> color;           // ds(I)
  std::vector<double> depth;         // ds(D), 0 if invalid
  std::vector<Vec3> color_correction;
  std::vector<double> depth_correction;
  std::vector<double> logit_opacity;
  std::vector<Vec3> log_scale;
  std::vector<Quat> rotation;
  std::vector<char> valid;

  [[nodiscard]] std::size_t cells() const { return pixel.size(); }
};

/// Builds attribute maps from a frame. A cell is valid when at least one of its
/// pixels has valid depth, lies inside the instrument mask and (if given) inside
/// `region`.
AttributeMaps compute_attribute_maps(const FrameObservation& frame, int stride, const ParameterizerDefaults& defaults,
                                     const Mask* region = nullptr);

/// Inverse projection of pixel u at depth z into camera coordinates.
Vec3 back_project(const Vec2& pixel, double depth, const CameraIntrinsics& intrinsics);

/// Turns attribute maps into camera-frame Gaussians: c = SH(ds(I) + dC), mu = back_project(u, D + dD).
GaussianCloud gaussians_from_maps(const AttributeMaps& maps, const CameraIntrinsics& intrinsics);

/// Pluggable stand-in for a learned regressor: frame (+ optional region) -> camera-frame cloud.
using Parameterizer = std::function<GaussianCloud(const FrameObservation&, int stride, const Mask* region)>;

/// Deterministic pixel-aligned Gaussians in camera coordinates (no deformation).
GaussianCloud parameterize_frame(const FrameObservation& frame, int stride,
                                 const ParameterizerDefaults& defaults = {}, const Mask* region = nullptr);

struct RefineSettings {
  double lambda_depth = 0.002;
  double lr_position = 1e-4;
  double lr_log_scale = 5e-3;
  double lr_rotation = 1e-3;
  double lr_color = 2.5e-3;
  double lr_opacity = 5e-2;
};

/// Adam steps on all attributes of a camera-frame cloud, minimizing
/// |I_hat - I| + lambda_D |D_hat - D| rendered under the identity pose. When
/// `region` is given only its pixels enter the loss. Returns the loss history
/// (one value per iteration, measured before that iteration's step).
std::vector<double> refine_parameters(GaussianCloud& cloud, const FrameObservation& frame, int iterations,
                                      const RefineSettings& settings = {}, const Mask* region = nullptr);

/// 1 where accumulated alpha < delta (region not yet covered by the model).
Mask compute_expansion_mask(const Image& alpha, double delta);

/// Minimum fraction of masked pixels that triggers an expansion.
inline constexpr double kExpansionTriggerFraction = 0.002;

struct ExpansionSettings {
  int stride = 4;
  int refine_iterations = 0;
  RefineSettings refine;
  ParameterizerDefaults defaults;
};

/// Parameterizes the masked pixels, moves them to the world frame with the
/// camera-to-world transform and appends them (fresh deformation) to `model`.
/// Returns the number of Gaussians added; nothing happens when the masked
/// fraction is at or below the trigger.
std::size_t expand_scene(GaussianCloud& model, const FrameObservation& frame, const Mask& mask,
                         const Se3Pose& camera_to_world, const ExpansionSettings& settings);

}  // namespace dygs
