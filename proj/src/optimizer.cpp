#include "dygs/optimizer.hpp"

#include <stdexcept>

namespace dygs {

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr,
               const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient size mismatch");
  state.resize(params.size());
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i)
    adam_update(params[i], state.m[i], state.v[i], grads[i], lr, state.step, cfg);
}

}  // namespace dygs
