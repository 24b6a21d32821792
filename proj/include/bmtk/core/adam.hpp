#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bmtk/core/tensor.hpp"

namespace bmtk {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros_like(std::span<const Tensor> params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.emplace_back(p.shape());
      s.v.emplace_back(p.shape());
    }
    return s;
  }
};

/// Bias-corrected Adam update applied in place.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, double lr);

}  // namespace bmtk
