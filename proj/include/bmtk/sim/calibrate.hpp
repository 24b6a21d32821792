#pragma once

#include <utility>
#include <vector>

#include "bmtk/sim/fem.hpp"

namespace bmtk::sim {

enum class AreaMeasure {
  region,  // myocardium plus cavity (inside the outer boundary)
  cavity,  // inside the inner boundary only
};

struct CalibrationOptions {
  /// Upper end of the pressure sweep, kPa.
  double p_max_kpa = 6.0;
  /// Spacing of the coarse sweep used to bracket targets, kPa.
  double sweep_step_kpa = 0.25;
  /// Largest accepted |achieved - target| / target.
  double area_rel_tol = 0.005;
  /// Golden-section stops once the bracket is narrower than max(abs, rel * p).
  double p_abs_tol = 1e-4;
  double p_rel_tol = 5e-4;
  AreaMeasure measure = AreaMeasure::region;
};

struct CalibrationResult {
  double pressure_kpa = 0.0;
  double target_area_px2 = 0.0;
  double achieved_area_px2 = 0.0;
  EquilibriumState state;
};

/// Finds the cavity pressure whose deformed shape matches a target area.
/// The pressure-area curve is tabulated once by continuation from the unloaded
/// shape; each target is bracketed in the table and then refined by
/// golden-section search on |A(p) - target|.
class PressureCalibrator {
 public:
  PressureCalibrator(FemMesh start, const MaterialParams& material, CalibrationOptions options = {},
                     SolverOptions solver_options = {});

  /// Throws CalibrationError when the target lies outside the reachable range.
  CalibrationResult calibrate(double target_area_px2);
  CalibrationResult calibrate(double target_area_px2, AreaMeasure measure);
  /// Forward evaluation: converged state and its area at pressure p.
  CalibrationResult evaluate(double pressure_kpa, AreaMeasure measure);
  /// Smallest and largest area reachable over [0, p_max] (after truncation at any limit point).
  std::pair<double, double> reachable(AreaMeasure measure);
  double area_px2(const Eigen::VectorXd& displacement, AreaMeasure measure) const;

  EquilibriumSolver& solver() { return solver_; }
  const CalibrationOptions& options() const { return options_; }

 private:
  void ensure_sweep();
  EquilibriumState solve_near(double p);

  EquilibriumSolver solver_;
  CalibrationOptions options_;
  std::vector<EquilibriumState> sweep_;   // increasing pressure, starting at 0
  std::vector<EquilibriumState> recent_;  // evaluations of the current search, for prediction
};

/// One-shot convenience wrapper around PressureCalibrator.
CalibrationResult calibrate_pressure(double target_area_px2, const FemMesh& start, const MaterialParams& material,
                                     const CalibrationOptions& options = {});

}  // namespace bmtk::sim
