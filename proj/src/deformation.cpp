#include "dygs/deformation.hpp"

#include "dygs/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dygs {

DeformationParams init_deformation(int basis_count, double t_span, std::size_t count, double t_origin) {
  if (basis_count < 2) throw std::invalid_argument("init_deformation: need at least two bases");
  if (!(t_span > 0.0) || !std::isfinite(t_span)) throw std::invalid_argument("init_deformation: t_span must be positive");
  DeformationParams p;
  p.basis_count = basis_count;
  p.t_span = t_span;
  p.t_origin = t_origin;
  p.append_fresh(count);
  return p;
}

double eval_basis(double t, double tau, double log_sigma, double w) {
  const double sigma = std::exp(log_sigma);
  const double d = t - tau;
  return w * std::exp(-d * d / (2.0 * sigma * sigma));
}

ActiveSet active_indices(double t, int basis_count, int m, double t_span) {
  if (m < 1) throw std::invalid_argument("active_indices: m must be at least 1");
  ActiveSet out;
  const double half = t_span * m / static_cast<double>(basis_count - 1);
  for (int j = 0; j < basis_count; ++j) {
    const double tau0 = t_span * static_cast<double>(j) / static_cast<double>(basis_count - 1);
    if (t - half < tau0 && tau0 < t + half) out.push_back(j);
  }
  return out;
}

ActiveSet all_indices(int basis_count) {
  ActiveSet out(static_cast<std::size_t>(std::max(basis_count, 0)));
  for (int j = 0; j < basis_count; ++j) out[j] = j;
  return out;
}

void deformation_offsets(const DeformationParams& params, std::size_t point, double t, double* out) {
  std::fill(out, out + kDeformDims, 0.0);
  const double local = t - params.t_origin;
  const std::size_t base = point * params.basis_count;
  for (int j = 0; j < params.basis_count; ++j) {
    const double e = eval_basis(local, params.taus[base + j], params.log_sigmas[base + j], 1.0);
    const double* w = params.weight_row(point, j);
    for (int d = 0; d < kDeformDims; ++d) out[d] += e * w[d];
  }
}

GaussianCloud apply_deformation(const GaussianCloud& cloud, double t) {
  GaussianCloud out;
  out.positions = cloud.positions;
  out.log_scales = cloud.log_scales;
  out.rotations = cloud.rotations;
  out.sh_colors = cloud.sh_colors;
  out.logit_opacities = cloud.logit_opacities;
  const auto& params = cloud.deformation;
  if (params.basis_count == 0) return out;
  parallel_for(cloud.size(), 512, [&](std::size_t begin, std::size_t end) {
    double off[kDeformDims];
    for (std::size_t i = begin; i < end; ++i) {
      deformation_offsets(params, i, t, off);
      out.positions[i] += Vec3(off[kDeformPos], off[kDeformPos + 1], off[kDeformPos + 2]);
      out.log_scales[i] += Vec3(off[kDeformScale], off[kDeformScale + 1], off[kDeformScale + 2]);
      out.sh_colors[i] += Vec3(off[kDeformColor], off[kDeformColor + 1], off[kDeformColor + 2]);
      out.rotations[i] = normalize_quat(
          cloud.rotations[i] + Quat(off[kDeformRot], off[kDeformRot + 1], off[kDeformRot + 2], off[kDeformRot + 3]));
    }
  });
  return out;
}

namespace {

std::ptrdiff_t slot_of(const ActiveSet& active, int basis) {
  const auto it = std::lower_bound(active.begin(), active.end(), basis);
  if (it == active.end() || *it != basis) return -1;
  return it - active.begin();
}

}  // namespace

double DeformationGradients::tau(std::size_t point, int basis) const {
  const auto s = slot_of(active, basis);
  return s < 0 ? 0.0 : taus[point * active.size() + s];
}

double DeformationGradients::log_sigma(std::size_t point, int basis) const {
  const auto s = slot_of(active, basis);
  return s < 0 ? 0.0 : log_sigmas[point * active.size() + s];
}

double DeformationGradients::weight(std::size_t point, int basis, int dim) const {
  const auto s = slot_of(active, basis);
  return s < 0 ? 0.0 : weights[(point * active.size() + s) * kDeformDims + dim];
}

DeformationGradients deformation_backward(const GaussianCloud& cloud, double t, const CloudGradients& upstream,
                                          const ActiveSet& active) {
  const auto& params = cloud.deformation;
  const std::size_t n = cloud.size();
  if (upstream.size() != n) throw std::invalid_argument("deformation_backward: gradient size mismatch");
  if (!std::is_sorted(active.begin(), active.end()))
    throw std::invalid_argument("deformation_backward: active set must be sorted");
  DeformationGradients g;
  g.active = active;
  g.count = n;
  const std::size_t a = active.size();
  g.taus.assign(n * a, 0.0);
  g.log_sigmas.assign(n * a, 0.0);
  g.weights.assign(n * a * kDeformDims, 0.0);
  if (params.basis_count == 0 || a == 0) return g;
  const double local = t - params.t_origin;

  parallel_for(n, 256, [&](std::size_t begin, std::size_t end) {
    double off[kDeformDims];
    double up[kDeformDims];
    for (std::size_t i = begin; i < end; ++i) {
      for (int d = 0; d < 3; ++d) {
        up[kDeformPos + d] = upstream.positions[i][d];
        up[kDeformScale + d] = upstream.log_scales[i][d];
        up[kDeformColor + d] = upstream.sh_colors[i][d];
      }
      // Rotation: the deformed quaternion is normalize(r0 + offset).
      deformation_offsets(params, i, t, off);
      const Quat raw = cloud.rotations[i] + Quat(off[kDeformRot], off[kDeformRot + 1], off[kDeformRot + 2],
                                                 off[kDeformRot + 3]);
      const double norm = raw.norm();
      const Quat q = raw / norm;
      const Quat& gq = upstream.rotations[i];
      const Quat graw = (gq - q * q.dot(gq)) / norm;
      for (int d = 0; d < 4; ++d) up[kDeformRot + d] = graw[d];

      bool any = false;
      for (double v : up) any |= v != 0.0;
      if (!any) continue;

      const std::size_t base = i * params.basis_count;
      for (std::size_t s = 0; s < a; ++s) {
        const int j = active[s];
        const double tau = params.taus[base + j];
        const double sigma = std::exp(params.log_sigmas[base + j]);
        const double diff = local - tau;
        const double inv_var = 1.0 / (sigma * sigma);
        const double e = std::exp(-0.5 * diff * diff * inv_var);
        const double* w = params.weight_row(i, j);
        double* gw = g.weights.data() + (i * a + s) * kDeformDims;
        double dot = 0.0;
        for (int d = 0; d < kDeformDims; ++d) {
          gw[d] = e * up[d];
          dot += w[d] * up[d];
        }
        const double phi_dot = e * dot;
        g.taus[i * a + s] = phi_dot * diff * inv_var;
        g.log_sigmas[i * a + s] = phi_dot * diff * diff * inv_var;
      }
    }
  });
  return g;
}

}  // namespace dygs
