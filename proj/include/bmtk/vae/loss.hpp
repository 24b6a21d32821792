#pragma once

#include <vector>

#include "bmtk/core/graph.hpp"
#include "bmtk/core/tensor.hpp"

namespace bmtk::vae {

/// Frame weights from a Gaussian window N(60, 10) sampled at fixed intervals,
/// normalised to sum 1. For T = 50 with ES at 20 the sample points are 3t
/// (t < 20) and 60 + 2(t - 20); otherwise they run linearly from 0 at frame 0
/// to 60 at the ES frame and on to 120 at the last frame.
std::vector<double> omega_weights(int frames, int es_frame = 20);

struct LossWeights {
  double alpha = 10.0;  // gradient term
  double beta = 0.01;   // KL term, divided by T
};

template <class T>
struct LossVars {
  Var total, reconstruction, gradient, kl;
};

/// sum_t w_t [mean (phi - phi_hat)^2 + alpha mean (grad phi - grad phi_hat)^2] + beta/T * KL.
/// The gradients are spatial_gradient of each field.
template <class T>
LossVars<T> vae_loss_graph(BasicGraph<T>& g, Var phi, Var phi_hat, Var mu, Var logvar, const LossWeights& w,
                           const std::vector<T>& omega);

/// Value-only form taking precomputed gradients (T x 4 x M x N).
double vae_loss(const Tensor& phi, const Tensor& phi_hat, const Tensor& grad_phi, const Tensor& grad_phi_hat,
                const Tensor& mu, const Tensor& logvar, double alpha, double beta, const std::vector<double>& omega);

}  // namespace bmtk::vae
