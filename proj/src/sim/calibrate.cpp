#include "bmtk/sim/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bmtk/errors.hpp"

namespace bmtk::sim {

PressureCalibrator::PressureCalibrator(FemMesh start, const MaterialParams& material, CalibrationOptions options,
                                       SolverOptions solver_options)
    : solver_(std::move(start), material, solver_options), options_(options) {
  if (!(options_.p_max_kpa > 0.0) || !(options_.sweep_step_kpa > 0.0)) {
    throw ArgumentError("calibration needs positive p_max and sweep step");
  }
}

double PressureCalibrator::area_px2(const Eigen::VectorXd& displacement, AreaMeasure measure) const {
  const FemMesh& mesh = solver_.mesh();
  const FemMesh moved = mesh.displaced(displacement);
  const double s2 = mesh.spacing_mm * mesh.spacing_mm;
  return (measure == AreaMeasure::region ? region_area(moved) : enclosed_area(moved, moved.inner_edges)) / s2;
}

void PressureCalibrator::ensure_sweep() {
  if (!sweep_.empty()) return;
  EquilibriumState zero;
  zero.displacement = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(solver_.mesh().dofs()));
  sweep_.push_back(zero);
  double prev_region = area_px2(zero.displacement, AreaMeasure::region);
  double prev_cavity = area_px2(zero.displacement, AreaMeasure::cavity);
  const int n = static_cast<int>(std::ceil(options_.p_max_kpa / options_.sweep_step_kpa - 1e-9));
  for (int i = 1; i <= n; ++i) {
    const double p = std::min(options_.p_max_kpa, i * options_.sweep_step_kpa);
    EquilibriumState next;
    try {
      next = solver_.solve_from(sweep_.back(), p);
    } catch (const SolverError&) {
      break;  // past the inflation limit point
    }
    const double region = area_px2(next.displacement, AreaMeasure::region);
    const double cavity = area_px2(next.displacement, AreaMeasure::cavity);
    if (!(region > prev_region) || !(cavity > prev_cavity)) break;
    prev_region = region;
    prev_cavity = cavity;
    sweep_.push_back(std::move(next));
  }
  if (sweep_.size() < 2) throw CalibrationError("pressure sweep failed at the first step", prev_region, prev_region);
}

std::pair<double, double> PressureCalibrator::reachable(AreaMeasure measure) {
  ensure_sweep();
  return {area_px2(sweep_.front().displacement, measure), area_px2(sweep_.back().displacement, measure)};
}

EquilibriumState PressureCalibrator::solve_near(double p) {
  // Linear predictor from the two evaluations closest in pressure.
  std::vector<const EquilibriumState*> near;
  for (const auto& s : recent_) near.push_back(&s);
  std::sort(near.begin(), near.end(), [p](const EquilibriumState* a, const EquilibriumState* b) {
    return std::abs(a->pressure_kpa - p) < std::abs(b->pressure_kpa - p);
  });
  EquilibriumState guess;
  guess.pressure_kpa = p;
  if (near.size() >= 2 && near[0]->pressure_kpa != near[1]->pressure_kpa) {
    const double t = (p - near[0]->pressure_kpa) / (near[1]->pressure_kpa - near[0]->pressure_kpa);
    guess.displacement = near[0]->displacement + t * (near[1]->displacement - near[0]->displacement);
  } else if (!near.empty()) {
    guess.displacement = near[0]->displacement;
  } else {
    guess.displacement = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(solver_.mesh().dofs()));
  }
  if (!solver_.refine(guess)) {
    // fall back to continuation from the closest tabulated state below p
    const EquilibriumState* base = &sweep_.front();
    for (const auto& s : sweep_) {
      if (s.pressure_kpa <= p) base = &s;
    }
    guess = solver_.solve_from(*base, p);
  }
  recent_.push_back(guess);
  return guess;
}

CalibrationResult PressureCalibrator::evaluate(double pressure_kpa, AreaMeasure measure) {
  if (!(pressure_kpa >= 0.0) || !std::isfinite(pressure_kpa)) throw ArgumentError("pressure must be finite and >= 0");
  ensure_sweep();
  recent_.clear();
  // seed the predictor with the bracketing table entries
  for (std::size_t k = 0; k + 1 < sweep_.size(); ++k) {
    if (sweep_[k + 1].pressure_kpa >= pressure_kpa || k + 2 == sweep_.size()) {
      recent_.push_back(sweep_[k]);
      recent_.push_back(sweep_[k + 1]);
      break;
    }
  }
  CalibrationResult out;
  out.state = solve_near(pressure_kpa);
  out.pressure_kpa = pressure_kpa;
  out.achieved_area_px2 = area_px2(out.state.displacement, measure);
  out.target_area_px2 = out.achieved_area_px2;
  return out;
}

CalibrationResult PressureCalibrator::calibrate(double target_area_px2) {
  return calibrate(target_area_px2, options_.measure);
}

CalibrationResult PressureCalibrator::calibrate(double target, AreaMeasure measure) {
  if (!(target > 0.0) || !std::isfinite(target)) throw ArgumentError("target area must be positive and finite");
  ensure_sweep();
  const auto [lo, hi] = reachable(measure);
  const double tol = options_.area_rel_tol * target;
  if (target < lo - tol || target > hi + tol) {
    throw CalibrationError("target area " + std::to_string(target) + " px^2 outside reachable range [" +
                               std::to_string(lo) + ", " + std::to_string(hi) + "]",
                           lo, hi);
  }
  CalibrationResult out;
  out.target_area_px2 = target;
  if (std::abs(target - lo) <= 1e-9 * lo) {
    out.state = sweep_.front();
    out.achieved_area_px2 = lo;
    return out;
  }

  std::vector<double> areas;
  for (const auto& s : sweep_) areas.push_back(area_px2(s.displacement, measure));
  std::size_t k = 0;
  while (k + 2 < sweep_.size() && areas[k + 1] < target) ++k;
  recent_.clear();
  recent_.push_back(sweep_[k]);
  recent_.push_back(sweep_[k + 1]);

  double best_err = std::numeric_limits<double>::infinity();
  EquilibriumState best;
  auto f = [&](double p) {
    EquilibriumState st = solve_near(p);
    const double err = std::abs(area_px2(st.displacement, measure) - target);
    if (err < best_err) {
      best_err = err;
      best = std::move(st);
    }
    return err;
  };
  // the table endpoints are candidates too
  for (std::size_t i : {k, k + 1}) {
    const double err = std::abs(areas[i] - target);
    if (err < best_err) {
      best_err = err;
      best = sweep_[i];
    }
  }

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = sweep_[k].pressure_kpa, b = sweep_[k + 1].pressure_kpa;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > std::max(options_.p_abs_tol, options_.p_rel_tol * 0.5 * (a + b))) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  if (best_err > tol) {
    throw CalibrationError("golden-section search ended with area mismatch " + std::to_string(best_err) + " px^2",
                           lo, hi);
  }
  out.pressure_kpa = best.pressure_kpa;
  out.achieved_area_px2 = area_px2(best.displacement, measure);
  out.state = std::move(best);
  return out;
}

CalibrationResult calibrate_pressure(double target_area_px2, const FemMesh& start, const MaterialParams& material,
                                     const CalibrationOptions& options) {
  PressureCalibrator cal(start, material, options);
  return cal.calibrate(target_area_px2);
}

}  // namespace bmtk::sim
