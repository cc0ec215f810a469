#include "dygs/parameterizer.hpp"

#include "dygs/loss.hpp"
#include "dygs/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

namespace dygs {

void FrameObservation::validate() const {
  const int w = rgb.width, h = rgb.height;
  if (rgb.channels != 3) throw std::invalid_argument("frame: rgb must have 3 channels");
  if (depth.width != w || depth.height != h || depth.channels != 1)
    throw std::invalid_argument("frame: depth shape differs from rgb");
  if (instrument_mask.width != w || instrument_mask.height != h)
    throw std::invalid_argument("frame: mask shape differs from rgb");
  if (intrinsics.width != w || intrinsics.height != h)
    throw std::invalid_argument("frame: intrinsics size differs from image size");
  for (double d : depth.data)
    if (d < 0.0) throw std::invalid_argument("frame: negative depth");
}

Vec3 back_project(const Vec2& pixel, double depth, const CameraIntrinsics& k) {
  return depth * Vec3((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0);
}

AttributeMaps compute_attribute_maps(const FrameObservation& frame, int stride, const ParameterizerDefaults& defaults,
                                     const Mask* region) {
  if (stride < 1) throw std::invalid_argument("parameterize: stride must be at least 1");
  frame.validate();
  const int w = frame.rgb.width, h = frame.rgb.height;
  const CameraIntrinsics& k = frame.intrinsics;
  AttributeMaps maps;
  maps.stride = stride;
  maps.grid_width = (w + stride - 1) / stride;
  maps.grid_height = (h + stride - 1) / stride;
  const std::size_t cells = static_cast<std::size_t>(maps.grid_width) * maps.grid_height;
  maps.pixel.resize(cells);
  maps.color.assign(cells, Vec3::Zero());
  maps.depth.assign(cells, 0.0);
  maps.color_correction.assign(cells, Vec3::Zero());
  maps.depth_correction.assign(cells, 0.0);
  maps.logit_opacity.assign(cells, logit(defaults.opacity));
  maps.log_scale.assign(cells, Vec3::Zero());
  maps.rotation.assign(cells, Quat(1, 0, 0, 0));
  maps.valid.assign(cells, 0);

  for (int gy = 0; gy < maps.grid_height; ++gy) {
    for (int gx = 0; gx < maps.grid_width; ++gx) {
      const std::size_t cell = static_cast<std::size_t>(gy) * maps.grid_width + gx;
      const int x0 = gx * stride, y0 = gy * stride;
      const int x1 = std::min(w, x0 + stride), y1 = std::min(h, y0 + stride);
      maps.pixel[cell] = Vec2(0.5 * (x0 + x1 - 1), 0.5 * (y0 + y1 - 1));
      Vec3 color_sum = Vec3::Zero();
      double depth_sum = 0.0;
      int used = 0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          if (!frame.depth_valid(x, y) || !frame.instrument_mask.at(x, y)) continue;
          if (region && !region->at(x, y)) continue;
          color_sum += Vec3(frame.rgb.at(x, y, 0), frame.rgb.at(x, y, 1), frame.rgb.at(x, y, 2));
          depth_sum += frame.depth.at(x, y);
          ++used;
        }
      }
      if (used == 0) continue;
      maps.valid[cell] = 1;
      maps.color[cell] = color_sum / used;
      maps.depth[cell] = depth_sum / used;
      const double footprint = defaults.scale_factor * stride * maps.depth[cell] / k.fx;
      maps.log_scale[cell] = Vec3::Constant(std::log(footprint));
    }
  }
  return maps;
}

GaussianCloud gaussians_from_maps(const AttributeMaps& maps, const CameraIntrinsics& intrinsics) {
  GaussianCloud cloud;
  cloud.reserve(maps.cells());
  for (std::size_t c = 0; c < maps.cells(); ++c) {
    if (!maps.valid[c]) continue;
    const double z = maps.depth[c] + maps.depth_correction[c];
    const Vec3 rgb = (maps.color[c] + maps.color_correction[c]).cwiseMax(1e-4).cwiseMin(1.0 - 1e-4);
    cloud.push_back(back_project(maps.pixel[c], z, intrinsics), maps.log_scale[c], maps.rotation[c], color_to_sh(rgb),
                    maps.logit_opacity[c]);
  }
  return cloud;
}

GaussianCloud parameterize_frame(const FrameObservation& frame, int stride, const ParameterizerDefaults& defaults,
                                 const Mask* region) {
  return gaussians_from_maps(compute_attribute_maps(frame, stride, defaults, region), frame.intrinsics);
}

namespace {

std::span<double> flat(std::vector<Vec3>& v) { return {v.data()->data(), v.size() * 3}; }
std::span<double> flat(std::vector<Quat>& v) { return {v.data()->data(), v.size() * 4}; }
std::span<const double> flat(const std::vector<Vec3>& v) { return {v.data()->data(), v.size() * 3}; }
std::span<const double> flat(const std::vector<Quat>& v) { return {v.data()->data(), v.size() * 4}; }

}  // namespace

std::vector<double> refine_parameters(GaussianCloud& cloud, const FrameObservation& frame, int iterations,
                                      const RefineSettings& settings, const Mask* region) {
  std::vector<double> history;
  if (iterations <= 0 || cloud.empty()) return history;
  const Mask mask = region ? mask_and(*region, frame.instrument_mask) : frame.instrument_mask;
  AdamState pos, scl, rot, col, opa;
  for (int it = 0; it < iterations; ++it) {
    const Rasterizer raster(cloud, Se3Pose::identity(), frame.intrinsics);
    const RenderOutput out = raster.forward();
    const PhotometricLoss loss = photometric_loss(out, frame, mask, settings.lambda_depth);
    history.push_back(loss.value);
    const RenderGradients g = raster.backward(loss.grad, false);
    adam_step(pos, flat(cloud.positions), flat(g.positions), settings.lr_position);
    adam_step(scl, flat(cloud.log_scales), flat(g.log_scales), settings.lr_log_scale);
    adam_step(rot, flat(cloud.rotations), flat(g.rotations), settings.lr_rotation);
    adam_step(col, flat(cloud.sh_colors), flat(g.sh_colors), settings.lr_color);
    adam_step(opa, cloud.logit_opacities, g.logit_opacities, settings.lr_opacity);
    for (auto& q : cloud.rotations) q = normalize_quat(q);
  }
  return history;
}

Mask compute_expansion_mask(const Image& alpha, double delta) {
  Mask mask(alpha.width, alpha.height, false);
  for (int y = 0; y < alpha.height; ++y)
    for (int x = 0; x < alpha.width; ++x) mask.set(x, y, alpha.at(x, y) < delta);
  return mask;
}

std::size_t expand_scene(GaussianCloud& model, const FrameObservation& frame, const Mask& mask,
                         const Se3Pose& camera_to_world, const ExpansionSettings& settings) {
  if (mask.width != frame.rgb.width || mask.height != frame.rgb.height)
    throw std::invalid_argument("expand_scene: mask shape differs from frame");
  const double fraction = static_cast<double>(mask.count()) / static_cast<double>(mask.data.size());
  if (fraction <= kExpansionTriggerFraction) return 0;
  GaussianCloud added = parameterize_frame(frame, settings.stride, settings.defaults, &mask);
  if (added.empty()) return 0;
  refine_parameters(added, frame, settings.refine_iterations, settings.refine, &mask);
  const GaussianCloud world = transform_cloud(added, camera_to_world);
  const std::size_t before = model.size();
  model.append(world);
  return model.size() - before;
}

}  // namespace dygs
