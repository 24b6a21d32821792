#include "bmtk/sim/simulate.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "bmtk/errors.hpp"
#include "bmtk/sim/raster.hpp"

namespace bmtk::sim {

SubjectGeometry sample_geometry(Rng& rng, const CohortRanges& r) {
  SubjectGeometry g;
  g.inner_radius_px = rng.uniform(r.inner_min_px, r.inner_max_px);
  g.outer_radius_px = g.inner_radius_px + rng.uniform(r.thickness_min_px, r.thickness_max_px);
  g.ed_center_px = Vec2(48.0 + rng.uniform(-r.center_jitter_px, r.center_jitter_px),
                        48.0 + rng.uniform(-r.center_jitter_px, r.center_jitter_px));
  const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double mag = rng.uniform(0.0, r.shift_max_px);
  g.es_shift_px = Vec2(mag * std::cos(ang), mag * std::sin(ang));
  g.peak_reduction = rng.uniform(r.reduction_min, r.reduction_max);
  return g;
}

void SimulationConfig::validate() const {
  if (frames < 2) throw ArgumentError("simulation needs at least 2 frames");
  if (ed_frame < 0 || ed_frame >= frames || es_frame < 0 || es_frame >= frames || ed_frame == es_frame) {
    throw ArgumentError("ED and ES frames must be distinct indices in [0, frames)");
  }
  if (rows < 8 || cols < 8 || !(spacing_mm > 0.0)) throw ArgumentError("bad grid");
  if (band_radius < 0) throw ArgumentError("band radius must be >= 0");
  material.validate();
}

std::vector<double> cycle_phase(int frames, int ed, int es) {
  std::vector<double> w(static_cast<std::size_t>(frames), 0.0);
  const int es_k = ((es - ed) % frames + frames) % frames;
  const int relax = frames - 1 - es_k;
  for (int t = 0; t < frames; ++t) {
    const int k = ((t - ed) % frames + frames) % frames;
    double v;
    if (k <= es_k) {
      v = 0.5 * (1.0 - std::cos(std::numbers::pi * k / es_k));
    } else {
      v = relax > 0 ? 0.5 * (1.0 + std::cos(std::numbers::pi * (k - es_k) / relax)) : 1.0;
    }
    w[static_cast<std::size_t>(t)] = v;
  }
  return w;
}

std::vector<double> area_trajectory(double a_ed, double a_es, int frames, int ed, int es) {
  auto w = cycle_phase(frames, ed, es);
  for (double& v : w) v = a_ed + (a_es - a_ed) * v;
  return w;
}

namespace {

AnnulusSpec unloaded_spec(const SubjectGeometry& g, const SimulationConfig& c) {
  AnnulusSpec spec;
  spec.inner_radius_px = g.inner_radius_px;
  spec.outer_radius_px = g.outer_radius_px;
  spec.center_px = Vec2(0.5 * (c.cols - 1), 0.5 * (c.rows - 1));
  spec.target_elements = c.target_elements;
  spec.grid_rows = c.rows;
  spec.grid_cols = c.cols;
  spec.spacing_mm = c.spacing_mm;
  spec.margin_px = c.band_radius;
  return spec;
}

FemMesh placed(const FemMesh& ref, const Eigen::VectorXd& u, const Vec2& center_px) {
  FemMesh m = ref.displaced(u);
  const Vec2 shift = center_px * ref.spacing_mm - region_centroid(m);
  for (auto& x : m.nodes) x += shift;
  return m;
}

void check_fits(const FemMesh& m, const SimulationConfig& c, int frame) {
  const double lo = c.band_radius, hi_c = c.cols - 1.0 - c.band_radius, hi_r = c.rows - 1.0 - c.band_radius;
  for (const auto& x : m.nodes) {
    const Vec2 p = x / m.spacing_mm;
    if (p.x() < lo || p.x() > hi_c || p.y() < lo || p.y() > hi_r) {
      throw GeometryError("frame " + std::to_string(frame) + ": deformed shape leaves the image grid");
    }
  }
}

}  // namespace

namespace {

SimulatedSubject run(const FemMesh& mesh, PressureCalibrator& cal, const SimulationConfig& c,
                     std::span<const double> region_area_px2, std::span<const Vec2> centers_px) {
  const auto T = static_cast<std::size_t>(c.frames);
  if (region_area_px2.size() != T || centers_px.size() != T) {
    throw DimensionError("area and centre trajectories must have one entry per frame");
  }

  SimulatedSubject out;
  PressureSchedule& sched = out.schedule;
  sched.frames = c.frames;
  sched.ed_frame = c.ed_frame;
  sched.es_frame = c.es_frame;
  sched.pressure_kpa.resize(T);
  sched.target_area_px2.assign(region_area_px2.begin(), region_area_px2.end());
  sched.achieved_area_px2.resize(T);

  std::map<double, CalibrationResult> solved;  // identical targets share a solve
  std::vector<FemMesh> frames;
  frames.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    auto it = solved.find(region_area_px2[t]);
    if (it == solved.end()) {
      try {
        it = solved.emplace(region_area_px2[t], cal.calibrate(region_area_px2[t], AreaMeasure::region)).first;
      } catch (const CalibrationError& e) {
        throw CalibrationError("frame " + std::to_string(t) + ": " + e.what(), e.min_area(), e.max_area());
      } catch (const SolverError& e) {
        throw SolverError("frame " + std::to_string(t) + ": " + e.what(), e.residual());
      }
    }
    sched.pressure_kpa[t] = it->second.pressure_kpa;
    sched.achieved_area_px2[t] = it->second.achieved_area_px2;
    frames.push_back(placed(mesh, it->second.state.displacement, centers_px[t]));
    check_fits(frames.back(), c, static_cast<int>(t));
  }

  const FemMesh& ed_mesh = frames[static_cast<std::size_t>(c.ed_frame)];
  const Rasterizer ras(ed_mesh, c.rows, c.cols, c.band_radius);
  const std::size_t plane = c.rows * c.cols;
  out.sequence.spacing_mm = c.spacing_mm;
  out.sequence.fields = Tensor(Shape{T, 2, c.rows, c.cols});
  out.masks = Tensor(Shape{T, c.rows, c.cols});
  Eigen::VectorXd nodal(static_cast<Eigen::Index>(mesh.dofs()));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < mesh.nodes.size(); ++n) {
      nodal.segment<2>(2 * static_cast<Eigen::Index>(n)) = frames[t].nodes[n] - ed_mesh.nodes[n];
    }
    if (static_cast<int>(t) != c.ed_frame) ras.field_into(nodal, out.sequence.fields.data() + t * 2 * plane);
    const Mask m = static_cast<int>(t) == c.ed_frame ? ras.inside() : mesh_mask(frames[t], c.rows, c.cols);
    for (std::size_t i = 0; i < plane; ++i) out.masks[t * plane + i] = m.bits[i] ? 1.0f : 0.0f;
  }
  out.ed_myocardium = ras.inside();
  out.ed_cavity = cavity_mask(ed_mesh, c.rows, c.cols);
  out.ed_mesh = ed_mesh;
  return out;
}

}  // namespace

SimulatedSubject simulate_sequence(const SubjectGeometry& g, const SimulationConfig& c,
                                   std::span<const double> region_area_px2, std::span<const Vec2> centers_px) {
  c.validate();
  const FemMesh mesh = build_annulus_mesh(unloaded_spec(g, c));
  PressureCalibrator cal(mesh, c.material, c.calibration);
  return run(mesh, cal, c, region_area_px2, centers_px);
}

SimulatedSubject simulate_sequence(const SubjectGeometry& g, const SimulationConfig& c) {
  c.validate();
  if (!(g.peak_reduction > 0.0 && g.peak_reduction < 0.9)) throw ArgumentError("peak reduction must lie in (0, 0.9)");
  const FemMesh mesh = build_annulus_mesh(unloaded_spec(g, c));
  PressureCalibrator cal(mesh, c.material, c.calibration);
  const double s2 = c.spacing_mm * c.spacing_mm;
  const double cavity_es = enclosed_area(mesh, mesh.inner_edges) / s2;
  CalibrationResult ed;
  try {
    ed = cal.calibrate(cavity_es / (1.0 - g.peak_reduction), AreaMeasure::cavity);
  } catch (const CalibrationError& e) {
    throw CalibrationError(std::string("ED cavity target: ") + e.what(), e.min_area(), e.max_area());
  }
  const double a_ed = cal.area_px2(ed.state.displacement, AreaMeasure::region);
  const double a_es = region_area(mesh) / s2;
  const auto areas = area_trajectory(a_ed, a_es, c.frames, c.ed_frame, c.es_frame);
  const auto phase = cycle_phase(c.frames, c.ed_frame, c.es_frame);
  std::vector<Vec2> centers;
  for (double w : phase) centers.push_back(g.ed_center_px + w * g.es_shift_px);
  return run(mesh, cal, c, areas, centers);
}

}  // namespace bmtk::sim
