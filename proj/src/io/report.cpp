#include "bmtk/io/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "bmtk/errors.hpp"
#include "bmtk/io/container.hpp"

namespace bmtk::io {

std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string metrics_csv(const std::vector<SubjectMetrics>& rows) {
  std::string s = "subject,frame,dice,mcd_mm,jac_metric\n";
  for (const auto& r : rows)
    for (const auto& f : r.frames) {
      s += r.subject + "," + std::to_string(f.frame) + "," + fmt_num(f.dice) + "," + fmt_num(f.mcd_mm) + "," +
           fmt_num(f.jac_metric) + "\n";
    }
  return s;
}

std::string strain_csv(const std::vector<SubjectStrain>& rows) {
  std::string s = "subject,frame,rr_pct,cc_pct\n";
  for (const auto& r : rows)
    for (std::size_t t = 0; t < r.curve.rr_pct.size(); ++t) {
      s += r.subject + "," + std::to_string(t) + "," + fmt_num(r.curve.rr_pct[t]) + "," + fmt_num(r.curve.cc_pct[t]) + "\n";
    }
  return s;
}

std::string pressure_csv(const std::vector<SubjectPressure>& rows) {
  std::string s = "subject,frame,pressure_kpa,target_area_px2,achieved_area_px2\n";
  for (const auto& r : rows) {
    const auto& p = r.schedule;
    for (std::size_t t = 0; t < p.pressure_kpa.size(); ++t) {
      s += r.subject + "," + std::to_string(t) + "," + fmt_num(p.pressure_kpa[t]) + "," +
           fmt_num(p.target_area_px2[t]) + "," + fmt_num(p.achieved_area_px2[t]) + "\n";
    }
  }
  return s;
}

Tensor frame_of(const Tensor& seq, std::size_t t) {
  if (seq.rank() < 1 || t >= seq.extent(0)) throw DimensionError("frame index out of range");
  Shape s(seq.shape().begin() + 1, seq.shape().end());
  Tensor out(s);
  std::copy(seq.data() + t * out.size(), seq.data() + (t + 1) * out.size(), out.data());
  return out;
}

std::string quiver_csv(const Tensor& field, const Mask& roi, double spacing_mm) {
  if (field.rank() != 3 || field.extent(0) != 2 || field.extent(1) != roi.rows || field.extent(2) != roi.cols) {
    throw DimensionError("quiver: field must be 2 x M x N on the mask grid");
  }
  const std::size_t n = roi.rows * roi.cols;
  std::string s = "x,y,u,v\n";
  for (std::size_t r = 0; r < roi.rows; ++r)
    for (std::size_t c = 0; c < roi.cols; ++c) {
      const std::size_t i = r * roi.cols + c;
      if (!roi.bits[i]) continue;
      s += fmt_num(c * spacing_mm) + "," + fmt_num(r * spacing_mm) + "," + fmt_num(field[i] * spacing_mm) + "," +
           fmt_num(field[n + i] * spacing_mm) + "\n";
    }
  return s;
}

std::string log_det_jacobian_csv(const Tensor& field) {
  const Tensor det = metrics::jacobian_determinant(field);
  const std::size_t rows = det.extent(0), cols = det.extent(1);
  std::string s;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) s += ",";
      s += fmt_num(std::log(std::max(1e-6, static_cast<double>(det[r * cols + c]))));
    }
    s += "\n";
  }
  return s;
}

std::vector<std::filesystem::path> emit_report(const std::filesystem::path& dir, const Tensor& fields, const Mask& roi,
                                               double spacing_mm) {
  if (fields.rank() != 4 || fields.extent(1) != 2) throw DimensionError("report: fields must be T x 2 x M x N");
  std::vector<std::filesystem::path> out;
  for (std::size_t t = 0; t < fields.extent(0); ++t) {
    const Tensor f = frame_of(fields, t);
    char name[32];
    std::snprintf(name, sizeof name, "quiver_f%03zu.csv", t);
    out.push_back(dir / name);
    write_text(out.back(), quiver_csv(f, roi, spacing_mm));
    std::snprintf(name, sizeof name, "logdetj_f%03zu.csv", t);
    out.push_back(dir / name);
    write_text(out.back(), log_det_jacobian_csv(f));
  }
  return out;
}

}  // namespace bmtk::io
