#pragma once

#include "dygs/scene_model.hpp"

#include <cstddef>
#include <vector>

namespace dygs {

/// Basis indices eligible for gradient updates at one evaluation time.
using ActiveSet = std::vector<int>;

/// Deformation layout with `count` points whose B bases are evenly spaced over
/// [0, t_span] with zero weights and widths equal to the spacing.
DeformationParams init_deformation(int basis_count, double t_span, std::size_t count = 0, double t_origin = 0.0);

/// w * exp(-(t - tau)^2 / (2 sigma^2)), sigma = exp(log_sigma).
double eval_basis(double t, double tau, double log_sigma, double w);

/// Bases whose initial center lies strictly inside (t - span*m/(B-1), t + span*m/(B-1)).
/// `t` is measured from the deformation origin.
ActiveSet active_indices(double t, int basis_count, int m, double t_span);

/// Every basis index; used when partial activation is disabled.
ActiveSet all_indices(int basis_count);

/// Canonical attributes plus the summed basis deviations at absolute time `t`.
/// Rotations are renormalized; opacities are left untouched. The returned cloud
/// carries no deformation parameters.
GaussianCloud apply_deformation(const GaussianCloud& cloud, double t);

/// Sum over bases of one point's deviation vector (13 dims) at absolute time t.
void deformation_offsets(const DeformationParams& params, std::size_t point, double t, double* out);

/// Gradients restricted to an active set. Row layout follows `active`.
struct DeformationGradients {
  ActiveSet active;
  std::size_t count = 0;
  std::vector<double> taus;        // count * |active|
  std::vector<double> log_sigmas;  // count * |active|
  std::vector<double> weights;     // count * |active| * kDeformDims

  /// Dense lookup; bases outside the active set report exactly zero.
  [[nodiscard]] double tau(std::size_t point, int basis) const;
  [[nodiscard]] double log_sigma(std::size_t point, int basis) const;
  [[nodiscard]] double weight(std::size_t point, int basis, int dim) const;
};

/// Maps gradients on the deformed attributes at time `t` back onto the
/// deformation parameters of the active bases.
DeformationGradients deformation_backward(const GaussianCloud& cloud, double t, const CloudGradients& upstream,
                                          const ActiveSet& active);

}  // namespace dygs
