#pragma once

#include <span>
#include <vector>

#include "bmtk/core/graph.hpp"

/// Differentiable operations recorded on a BasicGraph. Shapes are never
/// broadcast; mismatches raise DimensionError. Instantiated for float and double.
namespace bmtk::ad {

inline constexpr double kLeakySlope = 0.01;

template <class T> Var add(BasicGraph<T>& g, Var a, Var b);
template <class T> Var sub(BasicGraph<T>& g, Var a, Var b);
template <class T> Var mul(BasicGraph<T>& g, Var a, Var b);
template <class T> Var scale(BasicGraph<T>& g, Var a, T factor);
template <class T> Var add_scalar(BasicGraph<T>& g, Var a, T offset);

template <class T> Var leaky_relu(BasicGraph<T>& g, Var a, T slope = T(kLeakySlope));
template <class T> Var sigmoid(BasicGraph<T>& g, Var a);
template <class T> Var tanh(BasicGraph<T>& g, Var a);
template <class T> Var exp(BasicGraph<T>& g, Var a);

template <class T> Var reshape(BasicGraph<T>& g, Var a, Shape shape);
/// Rows [begin, end) along axis 0.
template <class T> Var slice(BasicGraph<T>& g, Var a, std::size_t begin, std::size_t end);
/// Concatenation along axis 0; trailing extents must agree.
template <class T> Var concat(BasicGraph<T>& g, std::span<const Var> parts);

/// x: N x in, w: out x in, b: out. Returns N x out.
template <class T> Var dense(BasicGraph<T>& g, Var x, Var w, Var b);

/// Cross-correlation. x: N x C x H x W, w: O x C x k x k (k odd), b: O.
template <class T> Var conv2d(BasicGraph<T>& g, Var x, Var w, Var b, int stride, int pad);
/// Nearest-neighbour 2x upsampling of N x C x H x W.
template <class T> Var upsample_nearest2x(BasicGraph<T>& g, Var x);
/// Bilinear upsampling by an integer factor with half-pixel centres and edge clamping.
template <class T> Var upsample_bilinear(BasicGraph<T>& g, Var x, int factor);

template <class T> Var sum(BasicGraph<T>& g, Var a);
template <class T> Var sum_squares(BasicGraph<T>& g, Var a);
/// Mean of squared differences over all elements.
template <class T> Var mse(BasicGraph<T>& g, Var a, Var b);
/// sum_t weights[t] * mean over frame t of (a - b)^2, frames along axis 0.
template <class T> Var weighted_frame_mse(BasicGraph<T>& g, Var a, Var b, std::span<const T> weights);
/// sum over elements of mask * (a - b)^2; `mask` has a's shape.
template <class T> Var masked_sse(BasicGraph<T>& g, Var a, Var b, const BasicTensor<T>& mask);
/// KL(N(mu, exp(logvar)) || N(0, I)) summed over all entries.
template <class T> Var kl_gaussian(BasicGraph<T>& g, Var mu, Var logvar);

/// Forward differences of a T x 2 x H x W field, giving T x 4 x H x W with
/// channels (dx/dcol, dx/drow, dy/dcol, dy/drow). The last column (row)
/// repeats the preceding difference.
template <class T> Var spatial_gradient(BasicGraph<T>& g, Var field);

/// Backward warp: out[t](r, c) = img[t] sampled bilinearly at
/// (c + field[t,0](r,c), r + field[t,1](r,c)) with clamp-to-edge.
/// img: T x H x W, field: T x 2 x H x W.
template <class T> Var warp(BasicGraph<T>& g, Var img, Var field);

/// Gated recurrent unit weights. w_*: D_h x D_x, u_*: D_h x D_h, b_*: D_h.
struct GruVars {
  Var w_reset, u_reset, b_reset;
  Var w_update, u_update, b_update;
  Var w_cand, u_cand, b_cand;
};

/// One GRU step on row vectors (1 x D). h_new = (1 - u) * h + u * candidate.
template <class T> Var gru_step(BasicGraph<T>& g, Var h_prev, Var x, const GruVars& p);

}  // namespace bmtk::ad
