#include "dygs/rasterizer.hpp"

#include "dygs/parallel.hpp"
#include "dygs/pose_dynamics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dygs {

namespace {

constexpr double kCutoffSq = kCutoffMahalanobis * kCutoffMahalanobis;

Eigen::Matrix<double, 2, 3> pinhole_jacobian(const Vec3& p, const CameraIntrinsics& k) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << k.fx * iz, 0.0, -k.fx * p.x() * iz * iz, 0.0, k.fy * iz, -k.fy * p.y() * iz * iz;
  return j;
}

// One blended contribution, recorded for the backward replay.
struct Contribution {
  int splat;
  double dx, dy;
  double gauss;
  double a;
  double transmittance;  // before this splat
  bool clamped;
};

// Shared per-pixel blend. `next(k)` yields the k-th candidate splat index in
// depth order; identical arithmetic keeps the tiled and reference paths equal.
template <typename Splats, typename Candidates, typename Sink>
void blend_pixel(const Splats& splats, double px, double py, const Candidates& candidates, Sink&& sink) {
  double t = 1.0;
  for (const int s : candidates) {
    const auto& sp = splats[s];
    const double dx = px - sp.mean2d.x();
    const double dy = py - sp.mean2d.y();
    const double d2 = sp.conic00 * dx * dx + 2.0 * sp.conic01 * dx * dy + sp.conic11 * dy * dy;
    if (!(d2 <= kCutoffSq)) continue;
    const double g = std::exp(-0.5 * d2);
    double a = sp.alpha * g;
    bool clamped = false;
    if (a > kMaxAlpha) {
      a = kMaxAlpha;
      clamped = true;
    }
    sink(Contribution{s, dx, dy, g, a, t, clamped});
    t *= 1.0 - a;
  }
}

// Contiguous span helper over a subrange of an index vector.
struct IndexSpan {
  const int* b;
  const int* e;
  const int* begin() const { return b; }
  const int* end() const { return e; }
};

}  // namespace

std::optional<ProjectedGaussian> project_gaussian(const Vec3& mean, const Mat3& cov, const Se3Pose& pose,
                                                  const CameraIntrinsics& k) {
  const Vec3 pc = pose.apply(mean);
  if (!(pc.z() > k.near)) return std::nullopt;
  const auto j = pinhole_jacobian(pc, k);
  const Eigen::Matrix<double, 2, 3> m = j * pose.rotation;
  ProjectedGaussian out;
  out.mean2d = Vec2(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
  out.cov2d = m * cov * m.transpose() + kLowPass * Mat2::Identity();
  out.cam_depth = pc.z();
  return out;
}

Rasterizer::Rasterizer(const GaussianCloud& cloud, const Se3Pose& pose, const CameraIntrinsics& intrinsics)
    : cloud_(cloud), pose_(pose), intrinsics_(intrinsics) {
  intrinsics_.validate();
  const std::size_t n = cloud.size();
  splats_.resize(n);
  std::vector<char> visible(n, 0);
  const CameraIntrinsics& k = intrinsics_;

  parallel_for(n, 1024, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Splat& sp = splats_[i];
      sp.cam_mean = pose_.apply(cloud.positions[i]);
      if (!(sp.cam_mean.z() > k.near)) continue;
      sp.cov3d = build_covariance(cloud.log_scales[i], cloud.rotations[i]);
      sp.jacobian = pinhole_jacobian(sp.cam_mean, k);
      const Eigen::Matrix<double, 2, 3> m = sp.jacobian * pose_.rotation;
      sp.mean2d = Vec2(k.fx * sp.cam_mean.x() / sp.cam_mean.z() + k.cx,
                       k.fy * sp.cam_mean.y() / sp.cam_mean.z() + k.cy);
      sp.cov2d = m * sp.cov3d * m.transpose() + kLowPass * Mat2::Identity();
      const double a = sp.cov2d(0, 0), b = 0.5 * (sp.cov2d(0, 1) + sp.cov2d(1, 0)), c = sp.cov2d(1, 1);
      const double det = a * c - b * b;
      if (!(det > 0.0) || !std::isfinite(det)) continue;
      sp.conic00 = c / det;
      sp.conic01 = -b / det;
      sp.conic11 = a / det;
      const double mid = 0.5 * (a + c);
      const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
      const double radius = kCutoffMahalanobis * std::sqrt(lambda_max) + 1.0;
      sp.x0 = static_cast<int>(std::max(0.0, std::floor(sp.mean2d.x() - radius)));
      sp.x1 = static_cast<int>(std::min<double>(k.width - 1, std::ceil(sp.mean2d.x() + radius)));
      sp.y0 = static_cast<int>(std::max(0.0, std::floor(sp.mean2d.y() - radius)));
      sp.y1 = static_cast<int>(std::min<double>(k.height - 1, std::ceil(sp.mean2d.y() + radius)));
      if (!std::isfinite(sp.mean2d.x()) || !std::isfinite(sp.mean2d.y()) || sp.x0 > sp.x1 || sp.y0 > sp.y1) continue;
      sp.color = sh_to_color(cloud.sh_colors[i]);
      sp.alpha = sigmoid(cloud.logit_opacities[i]);
      visible[i] = 1;
    }
  });

  order_.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (visible[i]) order_.push_back(static_cast<int>(i));
  std::stable_sort(order_.begin(), order_.end(),
                   [&](int a, int b) { return splats_[a].cam_mean.z() < splats_[b].cam_mean.z(); });

  tiles_x_ = (k.width + kTileSize - 1) / kTileSize;
  tiles_y_ = (k.height + kTileSize - 1) / kTileSize;
  const int tiles = tiles_x_ * tiles_y_;
  std::vector<int> counts(tiles + 1, 0);
  for (const int s : order_) {
    const Splat& sp = splats_[s];
    for (int ty = sp.y0 / kTileSize; ty <= sp.y1 / kTileSize; ++ty)
      for (int tx = sp.x0 / kTileSize; tx <= sp.x1 / kTileSize; ++tx) ++counts[ty * tiles_x_ + tx + 1];
  }
  tile_offsets_.assign(tiles + 1, 0);
  std::partial_sum(counts.begin(), counts.end(), tile_offsets_.begin());
  tile_entries_.resize(tile_offsets_.back());
  std::vector<int> cursor(tile_offsets_.begin(), tile_offsets_.end() - 1);
  for (const int s : order_) {
    const Splat& sp = splats_[s];
    for (int ty = sp.y0 / kTileSize; ty <= sp.y1 / kTileSize; ++ty)
      for (int tx = sp.x0 / kTileSize; tx <= sp.x1 / kTileSize; ++tx) tile_entries_[cursor[ty * tiles_x_ + tx]++] = s;
  }
}

RenderOutput Rasterizer::forward() const {
  const int w = intrinsics_.width, h = intrinsics_.height;
  RenderOutput out{Image(w, h, 3), Image(w, h, 1), Image(w, h, 1)};
  parallel_for(static_cast<std::size_t>(tiles_x_) * tiles_y_, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t tile = begin; tile < end; ++tile) {
      const int tx = static_cast<int>(tile) % tiles_x_, ty = static_cast<int>(tile) / tiles_x_;
      const IndexSpan list{tile_entries_.data() + tile_offsets_[tile], tile_entries_.data() + tile_offsets_[tile + 1]};
      for (int y = ty * kTileSize; y < std::min(h, (ty + 1) * kTileSize); ++y) {
        for (int x = tx * kTileSize; x < std::min(w, (tx + 1) * kTileSize); ++x) {
          double r = 0, g = 0, b = 0, d = 0, acc = 0;
          blend_pixel(splats_, x, y, list, [&](const Contribution& c) {
            const Splat& sp = splats_[c.splat];
            const double wgt = c.a * c.transmittance;
            r += wgt * sp.color.x();
            g += wgt * sp.color.y();
            b += wgt * sp.color.z();
            d += wgt * sp.cam_mean.z();
            acc += wgt;
          });
          out.color.at(x, y, 0) = r;
          out.color.at(x, y, 1) = g;
          out.color.at(x, y, 2) = b;
          out.depth.at(x, y) = d;
          out.alpha.at(x, y) = acc;
        }
      }
    }
  });
  return out;
}

RenderOutput Rasterizer::forward_reference() const {
  const int w = intrinsics_.width, h = intrinsics_.height;
  RenderOutput out{Image(w, h, 3), Image(w, h, 1), Image(w, h, 1)};
  const IndexSpan all{order_.data(), order_.data() + order_.size()};
  parallel_for(static_cast<std::size_t>(h), 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t yy = begin; yy < end; ++yy) {
      const int y = static_cast<int>(yy);
      for (int x = 0; x < w; ++x) {
        double r = 0, g = 0, b = 0, d = 0, acc = 0;
        blend_pixel(splats_, x, y, all, [&](const Contribution& c) {
          const Splat& sp = splats_[c.splat];
          const double wgt = c.a * c.transmittance;
          r += wgt * sp.color.x();
          g += wgt * sp.color.y();
          b += wgt * sp.color.z();
          d += wgt * sp.cam_mean.z();
          acc += wgt;
        });
        out.color.at(x, y, 0) = r;
        out.color.at(x, y, 1) = g;
        out.color.at(x, y, 2) = b;
        out.depth.at(x, y) = d;
        out.alpha.at(x, y) = acc;
      }
    }
  });
  return out;
}

namespace {

// Image-space gradient of one splat, accumulated per tile entry.
struct SplatGrad2d {
  double mean_x = 0, mean_y = 0;
  double conic00 = 0, conic01 = 0, conic11 = 0;  // dL/dQ as a full symmetric matrix
  double r = 0, g = 0, b = 0;
  double depth = 0;
  double alpha = 0;

  SplatGrad2d& operator+=(const SplatGrad2d& o) {
    mean_x += o.mean_x;
    mean_y += o.mean_y;
    conic00 += o.conic00;
    conic01 += o.conic01;
    conic11 += o.conic11;
    r += o.r;
    g += o.g;
    b += o.b;
    depth += o.depth;
    alpha += o.alpha;
    return *this;
  }
};

// d R(q) / d q_k for a unit quaternion (w, x, y, z), contracted with dL/dR.
Quat rotation_grad_to_quat(const Quat& q, const Mat3& g) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Quat out;
  out[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  out[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                  w * g(2, 1) - 2.0 * x * g(2, 2));
  out[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                  z * g(2, 1) - 2.0 * y * g(2, 2));
  out[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) + y * g(1, 2) +
                  x * g(2, 0) + y * g(2, 1));
  return out;
}

}  // namespace

RenderGradients Rasterizer::backward(const RenderUpstream& upstream, bool want_pose) const {
  const int w = intrinsics_.width, h = intrinsics_.height;
  const auto check = [&](const Image& img, int channels, const char* name) {
    if (img.empty()) return false;
    if (img.width != w || img.height != h || img.channels != channels)
      throw std::invalid_argument(std::string("render_backward: upstream ") + name + " has the wrong shape");
    return true;
  };
  const bool has_color = check(upstream.color, 3, "color");
  const bool has_depth = check(upstream.depth, 1, "depth");
  const bool has_alpha = check(upstream.alpha, 1, "alpha");

  const std::size_t n = cloud_.size();
  RenderGradients grads(n);
  if (!has_color && !has_depth && !has_alpha) return grads;

  std::vector<SplatGrad2d> entry_grads(tile_entries_.size());
  const std::size_t tiles = static_cast<std::size_t>(tiles_x_) * tiles_y_;

  parallel_for(tiles, 1, [&](std::size_t begin, std::size_t end) {
    std::vector<Contribution> trace;
    std::vector<int> local_slot(n, -1);
    for (std::size_t tile = begin; tile < end; ++tile) {
      const int offset = tile_offsets_[tile];
      const IndexSpan list{tile_entries_.data() + offset, tile_entries_.data() + tile_offsets_[tile + 1]};
      for (int e = offset; e < tile_offsets_[tile + 1]; ++e) local_slot[tile_entries_[e]] = e;
      const int tx = static_cast<int>(tile) % tiles_x_, ty = static_cast<int>(tile) / tiles_x_;
      for (int y = ty * kTileSize; y < std::min(h, (ty + 1) * kTileSize); ++y) {
        for (int x = tx * kTileSize; x < std::min(w, (tx + 1) * kTileSize); ++x) {
          const double gr = has_color ? upstream.color.at(x, y, 0) : 0.0;
          const double gg = has_color ? upstream.color.at(x, y, 1) : 0.0;
          const double gb = has_color ? upstream.color.at(x, y, 2) : 0.0;
          const double gd = has_depth ? upstream.depth.at(x, y) : 0.0;
          const double ga = has_alpha ? upstream.alpha.at(x, y) : 0.0;
          if (gr == 0.0 && gg == 0.0 && gb == 0.0 && gd == 0.0 && ga == 0.0) continue;
          trace.clear();
          blend_pixel(splats_, x, y, list, [&](const Contribution& c) { trace.push_back(c); });
          double behind = 0.0;  // sum over later splats of weight * per-splat output gradient
          for (auto it = trace.rbegin(); it != trace.rend(); ++it) {
            const Splat& sp = splats_[it->splat];
            const double gout = gr * sp.color.x() + gg * sp.color.y() + gb * sp.color.z() + gd * sp.cam_mean.z() + ga;
            const double wgt = it->a * it->transmittance;
            SplatGrad2d& acc = entry_grads[local_slot[it->splat]];
            acc.r += wgt * gr;
            acc.g += wgt * gg;
            acc.b += wgt * gb;
            acc.depth += wgt * gd;
            const double dl_da = it->transmittance * gout - behind / (1.0 - it->a);
            behind += wgt * gout;
            if (it->clamped) continue;
            acc.alpha += dl_da * it->gauss;
            const double dl_dd2 = -0.5 * dl_da * sp.alpha * it->gauss;
            acc.conic00 += dl_dd2 * it->dx * it->dx;
            acc.conic01 += dl_dd2 * it->dx * it->dy;
            acc.conic11 += dl_dd2 * it->dy * it->dy;
            // d(d2)/d(mean) = -2 Q (p - mean)
            acc.mean_x += -2.0 * dl_dd2 * (sp.conic00 * it->dx + sp.conic01 * it->dy);
            acc.mean_y += -2.0 * dl_dd2 * (sp.conic01 * it->dx + sp.conic11 * it->dy);
          }
        }
      }
    }
  });

  // Deterministic reduction: tiles in index order.
  std::vector<SplatGrad2d> splat_grads(n);
  for (std::size_t e = 0; e < tile_entries_.size(); ++e) splat_grads[tile_entries_[e]] += entry_grads[e];

  const CameraIntrinsics& k = intrinsics_;
  const Mat3& wrot = pose_.rotation;
  constexpr std::size_t kChunk = 256;
  const std::size_t visible = order_.size();
  const std::size_t chunks = (visible + kChunk - 1) / kChunk;
  std::vector<Vec6> pose_partials(chunks, Vec6::Zero());

  parallel_for(visible, kChunk, [&](std::size_t begin, std::size_t end) {
    Vec6 pose_acc = Vec6::Zero();
    for (std::size_t o = begin; o < end; ++o) {
      const int i = order_[o];
      const Splat& sp = splats_[i];
      const SplatGrad2d& g2 = splat_grads[i];

      // Color (clamped SH activation) and opacity.
      const Vec3 raw_color = 0.5 * Vec3::Ones() + kShC0 * cloud_.sh_colors[i];
      const Vec3 gc(g2.r, g2.g, g2.b);
      for (int c = 0; c < 3; ++c)
        grads.sh_colors[i][c] = (raw_color[c] > 0.0 && raw_color[c] < 1.0) ? kShC0 * gc[c] : 0.0;
      grads.logit_opacities[i] = g2.alpha * sp.alpha * (1.0 - sp.alpha);

      // Conic -> 2D covariance.
      Mat2 conic;
      conic << sp.conic00, sp.conic01, sp.conic01, sp.conic11;
      Mat2 gq;
      gq << g2.conic00, g2.conic01, g2.conic01, g2.conic11;
      const Mat2 gcov2d = -conic * gq * conic;

      // 2D covariance -> 3D covariance, Jacobian and view rotation.
      const Eigen::Matrix<double, 2, 3> m = sp.jacobian * wrot;
      const Mat3 gcov3d = m.transpose() * gcov2d * m;
      const Eigen::Matrix<double, 2, 3> gm = 2.0 * gcov2d * m * sp.cov3d;
      const Eigen::Matrix<double, 2, 3> gj = gm * wrot.transpose();
      const Mat3 gw = sp.jacobian.transpose() * gm;

      // Camera-space mean.
      const Vec3& pc = sp.cam_mean;
      const double iz = 1.0 / pc.z(), iz2 = iz * iz, iz3 = iz2 * iz;
      Vec3 gpc = sp.jacobian.transpose() * Vec2(g2.mean_x, g2.mean_y);
      gpc.z() += g2.depth;
      gpc.x() += gj(0, 2) * (-k.fx * iz2);
      gpc.y() += gj(1, 2) * (-k.fy * iz2);
      gpc.z() += gj(0, 0) * (-k.fx * iz2) + gj(0, 2) * (2.0 * k.fx * pc.x() * iz3) + gj(1, 1) * (-k.fy * iz2) +
                 gj(1, 2) * (2.0 * k.fy * pc.y() * iz3);

      grads.positions[i] = wrot.transpose() * gpc;

      if (want_pose) {
        pose_acc.head<3>() += gpc;
        Vec3 grot = pc.cross(gpc);
        for (int c = 0; c < 3; ++c) grot += Vec3(wrot.col(c)).cross(Vec3(gw.col(c)));
        pose_acc.tail<3>() += grot;
      }

      // 3D covariance -> log-scale and quaternion.
      const Quat& raw_q = cloud_.rotations[i];
      const double qn = raw_q.norm();
      const Quat q = raw_q / qn;
      const Mat3 rot = quat_to_matrix(q);
      const Vec3 scale = cloud_.log_scales[i].array().exp();
      const Mat3 ms = rot * scale.asDiagonal();
      const Mat3 sym = 0.5 * (gcov3d + gcov3d.transpose());
      const Mat3 gms = 2.0 * sym * ms;
      Vec3 gscale;
      for (int c = 0; c < 3; ++c) gscale[c] = rot.col(c).dot(gms.col(c)) * scale[c];
      grads.log_scales[i] = gscale;
      const Mat3 grot_m = gms * scale.asDiagonal();
      const Quat gq_unit = rotation_grad_to_quat(q, grot_m);
      grads.rotations[i] = (gq_unit - q * q.dot(gq_unit)) / qn;
    }
    if (want_pose) pose_partials[begin / kChunk] = pose_acc;
  });

  for (const auto& p : pose_partials) grads.pose += p;
  return grads;
}

RenderOutput render(const GaussianCloud& cloud, const Se3Pose& pose, const CameraIntrinsics& intrinsics) {
  return Rasterizer(cloud, pose, intrinsics).forward();
}

RenderOutput render_reference(const GaussianCloud& cloud, const Se3Pose& pose, const CameraIntrinsics& intrinsics) {
  return Rasterizer(cloud, pose, intrinsics).forward_reference();
}

RenderGradients render_backward(const GaussianCloud& cloud, const Se3Pose& pose, const CameraIntrinsics& intrinsics,
                                const RenderUpstream& upstream) {
  return Rasterizer(cloud, pose, intrinsics).backward(upstream);
}

}  // namespace dygs
