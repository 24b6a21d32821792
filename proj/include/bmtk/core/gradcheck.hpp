#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "bmtk/core/graph.hpp"

namespace bmtk {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
};

/// Builds the op under test on a double-precision graph from leaf inputs.
using OpUnderTest = std::function<Var(GraphD&, std::span<const Var>)>;

/// Compares reverse-mode gradients against central finite differences (step
/// `h`) of the scalar <r, op(inputs)> with r uniform in [-1, 1] drawn from
/// `seed`. Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-2).
/// Throws Error naming `name` when a gradient is non-finite.
GradCheckResult grad_check(const std::string& name, const OpUnderTest& op, std::span<const TensorD> inputs,
                           double h = 1e-3, std::uint64_t seed = 0);

}  // namespace bmtk
