#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bmtk/core/grid.hpp"
#include "bmtk/core/tensor.hpp"
#include "bmtk/metrics/metrics.hpp"
#include "bmtk/sim/simulate.hpp"

namespace bmtk::io {

/// Shortest round-trip decimal for CSV cells ("nan" for NaN).
std::string fmt_num(double v);

struct SubjectMetrics {
  std::string subject;
  std::vector<metrics::FrameMetrics> frames;
};
/// subject,frame,dice,mcd_mm,jac_metric
std::string metrics_csv(const std::vector<SubjectMetrics>& rows);

struct SubjectStrain {
  std::string subject;
  metrics::StrainCurve curve;
};
/// subject,frame,rr_pct,cc_pct
std::string strain_csv(const std::vector<SubjectStrain>& rows);

struct SubjectPressure {
  std::string subject;
  sim::PressureSchedule schedule;
};
/// subject,frame,pressure_kpa,target_area_px2,achieved_area_px2
std::string pressure_csv(const std::vector<SubjectPressure>& rows);

/// Quiver rows (x_mm, y_mm, u_mm, v_mm) for pixels of `roi` in one frame of a 2 x M x N field.
std::string quiver_csv(const Tensor& field, const Mask& roi, double spacing_mm);
/// M rows of N comma-separated log(det J) values, det clamped below at 1e-6.
std::string log_det_jacobian_csv(const Tensor& field);

/// Writes quiver_fNNN.csv and logdetj_fNNN.csv for every frame of T x 2 x M x N
/// fields; returns the paths written in order.
std::vector<std::filesystem::path> emit_report(const std::filesystem::path& dir, const Tensor& fields,
                                               const Mask& roi, double spacing_mm);

/// Slice frame t out of a T x C x M x N tensor.
Tensor frame_of(const Tensor& seq, std::size_t t);

}  // namespace bmtk::io
