#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "bmtk/core/tensor.hpp"

namespace bmtk {

/// Handle to a node of a BasicGraph. Only meaningful for the graph that issued it.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const noexcept { return id != UINT32_MAX; }
};

/// Tape of executed operations. Nodes are appended in execution order and
/// `backward` visits them in exactly the reverse order, adding into input
/// gradients. One graph belongs to one thread.
template <class T>
class BasicGraph {
 public:
  using TensorT = BasicTensor<T>;
  using BackwardFn = std::function<void(BasicGraph&, Var)>;

  Var constant(TensorT value) { return push(std::move(value), false, {}); }
  Var variable(TensorT value) { return push(std::move(value), true, {}); }
  /// Leaf whose gradient tracking follows `value.requires_grad()`.
  Var input(TensorT value) {
    const bool rg = value.requires_grad();
    return push(std::move(value), rg, {});
  }

  /// Appends the result of an op. `fn` runs during backward when the node has
  /// received gradient; it is dropped when no input requires grad.
  Var record(TensorT value, bool requires_grad, BackwardFn fn) {
    return push(std::move(value), requires_grad, requires_grad ? std::move(fn) : BackwardFn{});
  }

  const TensorT& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  /// Gradient accumulated for `v`; zeros when nothing flowed into it.
  const TensorT& grad(Var v) { return grad_buffer(v); }

  /// Mutable gradient slot, allocated on first touch.
  TensorT& grad_buffer(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
      n.grad = TensorT(n.value.shape());
    }
    return n.grad;
  }

  void backward(Var loss) {
    Node& root = nodes_.at(loss.id);
    if (root.value.size() != 1) {
      throw DimensionError("backward requires a scalar loss, got " + shape_str(root.value.shape()));
    }
    grad_buffer(loss)[0] += T{1};
    for (std::int64_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, Var{static_cast<std::uint32_t>(i)});
    }
  }

  void zero_grad() {
    for (auto& n : nodes_) n.grad = TensorT();
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    TensorT value;
    TensorT grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(TensorT value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), TensorT(), requires_grad, std::move(fn)});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
};

using Graph = BasicGraph<float>;
using GraphD = BasicGraph<double>;

}  // namespace bmtk
