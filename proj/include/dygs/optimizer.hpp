#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace dygs {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-15;
};

/// Moments for a flat parameter block; grows with the block.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  void resize(std::size_t n) {
    m.resize(n, 0.0);
    v.resize(n, 0.0);
  }
};

/// One bias-corrected Adam update of a single scalar at step `step` (1-based).
inline void adam_update(double& param, double& m, double& v, double grad, double lr, long step,
                        const AdamConfig& cfg = {}) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
  const double mhat = m / (1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
  const double vhat = v / (1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
  param -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
}

/// Standard Adam over a whole block: advances the step counter, then updates
/// every parameter. Throws std::invalid_argument on size mismatch.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr,
               const AdamConfig& cfg = {});

}  // namespace dygs
