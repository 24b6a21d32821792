#pragma once

#include "bmtk/core/grid.hpp"
#include "bmtk/core/rng.hpp"
#include "bmtk/core/tensor.hpp"

namespace bmtk::sim {

struct CineTexture {
  float background = 0.15f;
  float cavity = 0.85f;
  float myocardium = 0.35f;
  float speckle_amplitude = 0.12f;  // peak deviation of the smoothed speckle
  double speckle_sigma = 1.0;       // px
  double blur_sigma = 0.7;          // px, applied to the whole image last
};

/// Synthetic ED frame (M x N, values in [0, 1]) with distinct cavity,
/// myocardium and background intensities and speckle inside the myocardium.
Tensor make_ed_image(const Mask& myocardium, const Mask& cavity, Rng& rng, const CineTexture& texture = {});

/// Frames T x M x N such that sampling frame t at x + phi_t(x) gives the ED
/// image at x. fields: T x 2 x M x N in pixels (channel 0 = column).
/// Pixels with no preimage under the mapping keep the ED intensity.
Tensor synthesize_cine(const Tensor& ed_image, const Tensor& fields);

}  // namespace bmtk::sim
