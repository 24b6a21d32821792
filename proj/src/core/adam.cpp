#include "bmtk/core/adam.hpp"

namespace bmtk {

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || params[i].shape() != state.m[i].shape()) {
      throw DimensionError("adam_step: shape mismatch for parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i].data();
    const float* g = grads[i].data();
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      p[j] = static_cast<float>(p[j] - lr * (mj / c1) / (std::sqrt(vj / c2) + state.eps));
    }
  }
}

}  // namespace bmtk
