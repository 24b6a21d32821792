#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "bmtk/core/grid.hpp"
#include "bmtk/core/tensor.hpp"
#include "bmtk/sim/simulate.hpp"

namespace bmtk::metrics {

/// 2|A n B| / (|A| + |B|); 1 when both are empty. Throws ArgumentError on a grid mismatch.
double dice(const Mask& a, const Mask& b);

/// Mask pixels with a 4-neighbour outside the mask (the grid edge counts as outside), as (row, col).
std::vector<std::pair<int, int>> boundary_pixels(const Mask& m);

/// Average of the two directed mean boundary-to-boundary distances, in mm.
/// Throws ArgumentError when either mask is empty.
double mcd(const Mask& a, const Mask& b, double spacing_mm);

/// det(I + grad u) per pixel of a 2 x M x N field (px units): central
/// differences, one-sided at the grid edge.
Tensor jacobian_determinant(const Tensor& field);

/// Mean |det J - 1| over the mask. Throws ArgumentError on an empty mask.
double jacobian_metric(const Tensor& field, const Mask& mask);

/// Mean endpoint error |phi_a - phi_b| in px over masked pixels of all frames (T x 2 x M x N).
double endpoint_error(const Tensor& a, const Tensor& b, const Mask& mask);

/// m(x + phi(x)) thresholded at 0.5, bilinear with clamp-to-edge.
Mask warp_mask(const Mask& m, const Tensor& field);

/// Centre of mass (col, row) in px.
std::array<double, 2> centroid(const Mask& m);
/// Pixels outside `m` not 4-connected to the grid border: the cavity enclosed by a myocardial ring.
Mask enclosed_region(const Mask& m);

/// Centre of mass of myocardium united with cavity.
std::array<double, 2> lv_centroid(const Mask& myocardium, const Mask& cavity);

struct StrainValue {
  double rr_pct = 0.0;
  double cc_pct = 0.0;
};

/// Mean radial / circumferential Lagrangian strain (x100) about `center` (col, row px).
/// F uses central differences; pixels whose 4-neighbours are all in the mask are
/// averaged, falling back to every mask pixel when none qualify.
StrainValue strain(const Tensor& field, std::array<double, 2> center, const Mask& mask);

struct StrainCurve {
  std::vector<double> rr_pct;
  std::vector<double> cc_pct;
  int peak_rr_frame = 0;
  int peak_cc_frame = 0;
  double peak_rr_pct = 0.0;  // max over frames
  double peak_cc_pct = 0.0;  // min over frames
};

StrainCurve strain_curves(const sim::DeformationSequence& seq, std::array<double, 2> center, const Mask& mask);

/// Mean squared second difference of a curve; 0 for fewer than 3 samples.
double temporal_roughness(const std::vector<double>& curve);

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for n < 2
  std::size_t n = 0;
};
Summary summarize(const std::vector<double>& values);

/// Per-frame evaluation of predicted fields against ground-truth masks.
struct FrameMetrics {
  int frame = 0;
  double dice = 0.0;    // warped frame-t mask vs ED mask
  double mcd_mm = 0.0;
  double jac_metric = 0.0;
};

/// fields: T x 2 x M x N; masks: T x M x N with frame 0 the reference.
/// jac_metric is taken over the ED mask.
std::vector<FrameMetrics> evaluate_sequence(const Tensor& fields, const Tensor& masks, double spacing_mm);

Mask mask_frame(const Tensor& masks, std::size_t t);

}  // namespace bmtk::metrics
