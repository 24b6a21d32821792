#include "bmtk/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "bmtk/core/ops.hpp"
#include "bmtk/core/rng.hpp"

namespace bmtk {

namespace {

double evaluate(const OpUnderTest& op, std::span<const TensorD> inputs, const TensorD& projection) {
  GraphD g;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.constant(t));
  const Var out = op(g, leaves);
  const auto& y = g.value(out);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * projection[i];
  return acc;
}

}  // namespace

GradCheckResult grad_check(const std::string& name, const OpUnderTest& op, std::span<const TensorD> inputs,
                           double h, std::uint64_t seed) {
  GraphD g;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(g.variable(t));
  const Var out = op(g, leaves);
  Rng rng(seed);
  TensorD projection(g.value(out).shape());
  for (auto& r : projection.values()) r = rng.uniform(-1.0, 1.0);
  const Var loss = ad::sum(g, ad::mul(g, out, g.constant(projection)));
  g.backward(loss);

  GradCheckResult result;
  std::vector<TensorD> probe(inputs.begin(), inputs.end());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const TensorD& analytic = g.grad(leaves[k]);
    if (!analytic.all_finite()) throw Error("grad_check(" + name + "): non-finite gradient for input " + std::to_string(k));
    for (std::size_t j = 0; j < inputs[k].size(); ++j) {
      const double x0 = inputs[k][j];
      probe[k][j] = x0 + h;
      const double up = evaluate(op, probe, projection);
      probe[k][j] = x0 - h;
      const double down = evaluate(op, probe, projection);
      probe[k][j] = x0;
      const double numeric = (up - down) / (2.0 * h);
      if (!std::isfinite(numeric)) {
        throw Error("grad_check(" + name + "): non-finite finite difference for input " + std::to_string(k));
      }
      const double a = analytic[j];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-2});
      if (err > result.max_rel_error) result = GradCheckResult{err, k, j};
    }
  }
  return result;
}

}  // namespace bmtk
