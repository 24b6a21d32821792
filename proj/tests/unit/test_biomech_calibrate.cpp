#include <doctest.h>

#include <cmath>

#include "bmtk/errors.hpp"
#include "bmtk/sim/calibrate.hpp"

using namespace bmtk;
using namespace bmtk::sim;

namespace {

FemMesh annulus() { return build_annulus_mesh(AnnulusSpec{}); }

double region_px2(const FemMesh& mesh, const Eigen::VectorXd& u) {
  return region_area(mesh.displaced(u)) / (mesh.spacing_mm * mesh.spacing_mm);
}

}  // namespace

TEST_CASE("calibrating to the undeformed area returns zero pressure") {
  const FemMesh mesh = annulus();
  const double a0 = region_px2(mesh, Eigen::VectorXd::Zero(mesh.dofs()));
  const CalibrationResult r = calibrate_pressure(a0, mesh, MaterialParams{});
  CHECK(std::abs(r.pressure_kpa) < 1e-3);
  CHECK(std::abs(r.achieved_area_px2 - a0) / a0 < 0.005);
}

TEST_CASE("pressure round trip through the forward solve") {
  const FemMesh mesh = annulus();
  PressureCalibrator cal(mesh, MaterialParams{});
  for (double p_star : {0.35, 1.3, 2.0, 3.7}) {
    // forward solve with an independent solver instance, by plain load stepping
    const Eigen::VectorXd u = solve_equilibrium(mesh, MaterialParams{}, p_star);
    const double target = region_px2(mesh, u);
    const CalibrationResult r = cal.calibrate(target);
    CAPTURE(p_star);
    CHECK(std::abs(r.pressure_kpa - p_star) / p_star < 0.01);
    CHECK(std::abs(r.achieved_area_px2 - target) / target < 0.005);
    CHECK(r.achieved_area_px2 == doctest::Approx(region_px2(mesh, r.state.displacement)));
  }
}

TEST_CASE("calibrated pressure increases with target area") {
  PressureCalibrator cal(annulus(), MaterialParams{});
  const auto [lo, hi] = cal.reachable(AreaMeasure::region);
  CHECK(hi > 1.15 * lo);
  double prev = -1.0;
  for (double f : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double p = cal.calibrate(lo + f * (hi - lo)).pressure_kpa;
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("cavity-area calibration matches the cavity measure") {
  const FemMesh mesh = annulus();
  PressureCalibrator cal(mesh, MaterialParams{});
  const double cav0 = enclosed_area(mesh, mesh.inner_edges) / (mesh.spacing_mm * mesh.spacing_mm);
  const CalibrationResult r = cal.calibrate(cav0 / 0.7, AreaMeasure::cavity);
  const FemMesh moved = mesh.displaced(r.state.displacement);
  const double cav = enclosed_area(moved, moved.inner_edges) / (mesh.spacing_mm * mesh.spacing_mm);
  CHECK(std::abs(cav - cav0 / 0.7) / (cav0 / 0.7) < 0.005);
}

TEST_CASE("unreachable targets raise a calibration error with bounds") {
  PressureCalibrator cal(annulus(), MaterialParams{});
  const auto [lo, hi] = cal.reachable(AreaMeasure::region);
  for (double target : {0.8 * lo, 1.2 * hi}) {
    try {
      cal.calibrate(target);
      FAIL("expected CalibrationError");
    } catch (const CalibrationError& e) {
      CHECK(e.min_area() == doctest::Approx(lo));
      CHECK(e.max_area() == doctest::Approx(hi));
    }
  }
}
