#pragma once

#include <cstdint>
#include <vector>

#include "bmtk/core/grid.hpp"
#include "bmtk/core/tensor.hpp"
#include "bmtk/sim/simulate.hpp"
#include "bmtk/vae/model.hpp"

namespace bmtk::reg {

struct RegistrationConfig {
  double mu = 1e-3;             // latent L2 weight
  double learning_rate = 0.1;   // Adam on z
  double init_variance = 0.8;   // z entries ~ N(0, variance)
  double tolerance = 1e-6;      // stop when the best objective improves by <= tolerance ...
  int patience = 5;             // ... this many iterations in a row
  /// Stop test is not applied before this iteration. Adam at lr 0.1 overshoots
  /// the first minimum and climbs for several steps, which would otherwise read as a stall.
  int min_iterations = 25;
  int max_iterations = 500;
  int dilation_radius = 3;      // px
  std::uint64_t seed = 0;
  double spacing_mm = 1.8;      // copied onto the output fields
  /// Divide each frame's masked SSE by the mask size. Off by default: the
  /// summed form keeps the data term comparable to mu * |z|^2 at mu = 1e-3.
  bool normalize_by_mask = false;

  /// Throws ArgumentError.
  void validate() const;
};

struct TrackingResult {
  Tensor z;                         // T x D, best iterate
  sim::DeformationSequence fields;  // decode(z) exactly
  std::vector<double> trace;        // objective at each iterate
  std::vector<double> best_trace;   // running minimum of trace
  std::vector<double> data_trace;   // dissimilarity part of trace
  int iterations = 0;               // == trace.size()
  int best_iteration = 0;
  bool converged = false;
  double seconds = 0.0;
};

struct ObjectiveTerms {
  double total = 0.0;
  double data = 0.0;     // (1/T) sum_t |(I_0 - I_t o phi_t) . M|^2, optionally per mask pixel
  double penalty = 0.0;  // mu |z|^2
};

/// Dilation of the ED myocardium by a discrete disk; radius 0 returns the input.
Mask dilate_mask(const Mask& mask, int radius);

/// Backward warp of one M x N image by a 2 x M x N field (bilinear, clamp-to-edge).
Tensor warp_image(const Tensor& image, const Tensor& field);
/// Frame-wise warp of T x M x N images by T x 2 x M x N fields.
Tensor warp_sequence(const Tensor& images, const Tensor& fields);

/// Objective for given decoded fields; `z` only enters through the penalty.
ObjectiveTerms lse_objective_fields(const Tensor& fields, const Tensor& z, const Tensor& images, const Mask& mask,
                                    double mu, bool normalize_by_mask = false);
/// Objective with fields = decode(z). Throws ManifestError on a grid or D mismatch.
ObjectiveTerms lse_objective(const vae::TemporalVae& model, const Tensor& z, const Tensor& images, const Mask& mask,
                             double mu, bool normalize_by_mask = false);

/// T x D matrix of i.i.d. N(0, variance) draws. Throws ArgumentError when variance <= 0.
Tensor init_latent(int latent_dim, int frames, std::uint64_t seed, double variance = 0.8);

/// Adam over z with the decoder frozen. images: T x M x N in [0, 1], frame 0
/// is the reference; ed_myocardium is dilated by config.dilation_radius.
/// Throws OptimizationError on a non-finite objective.
TrackingResult register_sequence(const Tensor& images, const Mask& ed_myocardium, const vae::TemporalVae& model,
                                 const RegistrationConfig& config);

}  // namespace bmtk::reg
