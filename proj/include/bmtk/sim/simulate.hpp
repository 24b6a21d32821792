#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bmtk/core/grid.hpp"
#include "bmtk/core/rng.hpp"
#include "bmtk/core/tensor.hpp"
#include "bmtk/sim/calibrate.hpp"
#include "bmtk/sim/mesh.hpp"

namespace bmtk::sim {

/// Shape parameters of one synthetic subject. Radii describe the unloaded
/// (end-systolic) annulus; pressure inflates it towards end-diastole.
struct SubjectGeometry {
  double inner_radius_px = 17.0;
  double outer_radius_px = 28.0;
  Vec2 ed_center_px{48.0, 48.0};  // region centre at ED
  Vec2 es_shift_px{0.0, 0.0};     // centre displacement ED -> ES
  double peak_reduction = 0.3;    // cavity area drop from ED to ES, fraction
};

/// Uniform sampling ranges for a synthetic cohort.
struct CohortRanges {
  double inner_min_px = 15.0, inner_max_px = 19.0;
  double thickness_min_px = 9.0, thickness_max_px = 12.0;
  double center_jitter_px = 3.0;
  double shift_max_px = 2.0;
  double reduction_min = 0.2, reduction_max = 0.4;
};

SubjectGeometry sample_geometry(Rng& rng, const CohortRanges& ranges = {});

struct SimulationConfig {
  std::size_t rows = 96;
  std::size_t cols = 96;
  double spacing_mm = 1.8;
  int frames = 50;
  int ed_frame = 0;
  int es_frame = 20;
  int target_elements = 600;
  int band_radius = 3;
  MaterialParams material;
  CalibrationOptions calibration;

  /// Throws ArgumentError on inconsistent settings.
  void validate() const;
};

struct PressureSchedule {
  int frames = 0;
  int ed_frame = 0;
  int es_frame = 0;
  std::vector<double> pressure_kpa;
  std::vector<double> target_area_px2;
  std::vector<double> achieved_area_px2;
};

/// T x 2 x M x N displacement fields in pixels on the ED grid.
struct DeformationSequence {
  Tensor fields;
  double spacing_mm = 1.0;

  std::size_t frames() const { return fields.extent(0); }
};

struct SimulatedSubject {
  DeformationSequence sequence;
  PressureSchedule schedule;
  Tensor masks;            // T x M x N myocardium membership per frame
  Mask ed_myocardium;
  Mask ed_cavity;
  FemMesh ed_mesh;         // configuration at ED, image coordinates (mm)
};

/// Cycle phase in [0, 1]: 0 at ED, 1 at ES, raised-cosine in between, back to 0 at the last frame.
std::vector<double> cycle_phase(int frames, int ed_frame, int es_frame);
/// a_ed + (a_es - a_ed) * phase(t).
std::vector<double> area_trajectory(double a_ed, double a_es, int frames, int ed_frame, int es_frame);

/// Full pipeline with the built-in trajectories (region area and centre follow cycle_phase).
SimulatedSubject simulate_sequence(const SubjectGeometry& geometry, const SimulationConfig& config);

/// Pipeline with explicit per-frame region-area targets (px^2) and region centres (px).
SimulatedSubject simulate_sequence(const SubjectGeometry& geometry, const SimulationConfig& config,
                                   std::span<const double> region_area_px2, std::span<const Vec2> centers_px);

}  // namespace bmtk::sim
