#include "bmtk/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bmtk/errors.hpp"

namespace bmtk::metrics {

namespace {

void same_grid(const Mask& a, const Mask& b, const char* what) {
  if (!a.same_grid(b)) throw ArgumentError(std::string(what) + ": masks are on different grids");
}

void check_field(const Tensor& f, const Mask& m, const char* what) {
  if (f.rank() != 3 || f.extent(0) != 2) throw DimensionError(std::string(what) + ": field must be 2 x M x N");
  if (f.extent(1) != m.rows || f.extent(2) != m.cols) throw ArgumentError(std::string(what) + ": mask grid differs");
}

// du/dcol and du/drow of one component plane, central inside, one-sided at the edge
struct Grad {
  double dc, dr;
};

Grad plane_grad(const float* p, std::size_t rows, std::size_t cols, std::size_t r, std::size_t c) {
  Grad g;
  if (cols < 2) {
    g.dc = 0;
  } else if (c == 0) {
    g.dc = static_cast<double>(p[r * cols + 1]) - p[r * cols];
  } else if (c + 1 == cols) {
    g.dc = static_cast<double>(p[r * cols + c]) - p[r * cols + c - 1];
  } else {
    g.dc = 0.5 * (static_cast<double>(p[r * cols + c + 1]) - p[r * cols + c - 1]);
  }
  if (rows < 2) {
    g.dr = 0;
  } else if (r == 0) {
    g.dr = static_cast<double>(p[cols + c]) - p[c];
  } else if (r + 1 == rows) {
    g.dr = static_cast<double>(p[r * cols + c]) - p[(r - 1) * cols + c];
  } else {
    g.dr = 0.5 * (static_cast<double>(p[(r + 1) * cols + c]) - p[(r - 1) * cols + c]);
  }
  return g;
}

// F = I + grad u as {Fxx, Fxy, Fyx, Fyy}
std::array<double, 4> deformation_gradient(const Tensor& f, std::size_t r, std::size_t c) {
  const std::size_t rows = f.extent(1), cols = f.extent(2);
  const Grad gx = plane_grad(f.data(), rows, cols, r, c);
  const Grad gy = plane_grad(f.data() + rows * cols, rows, cols, r, c);
  return {1.0 + gx.dc, gx.dr, gy.dc, 1.0 + gy.dr};
}

}  // namespace

double dice(const Mask& a, const Mask& b) {
  same_grid(a, b, "dice");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<std::pair<int, int>> boundary_pixels(const Mask& m) {
  std::vector<std::pair<int, int>> out;
  const int R = static_cast<int>(m.rows), C = static_cast<int>(m.cols);
  const auto in = [&](int r, int c) { return r >= 0 && r < R && c >= 0 && c < C && m(r, c); };
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) {
      if (!m(r, c)) continue;
      if (!in(r - 1, c) || !in(r + 1, c) || !in(r, c - 1) || !in(r, c + 1)) out.emplace_back(r, c);
    }
  return out;
}

double mcd(const Mask& a, const Mask& b, double spacing_mm) {
  same_grid(a, b, "mcd");
  const auto ba = boundary_pixels(a), bb = boundary_pixels(b);
  if (ba.empty() || bb.empty()) throw ArgumentError("mcd: both masks must be nonempty");
  const auto directed = [](const auto& from, const auto& to) {
    double acc = 0.0;
    for (const auto& [r, c] : from) {
      long best = std::numeric_limits<long>::max();
      for (const auto& [r2, c2] : to) {
        const long dr = r - r2, dc = c - c2;
        best = std::min(best, dr * dr + dc * dc);
      }
      acc += std::sqrt(static_cast<double>(best));
    }
    return acc / static_cast<double>(from.size());
  };
  return 0.5 * (directed(ba, bb) + directed(bb, ba)) * spacing_mm;
}

Tensor jacobian_determinant(const Tensor& field) {
  if (field.rank() != 3 || field.extent(0) != 2) throw DimensionError("jacobian: field must be 2 x M x N");
  const std::size_t rows = field.extent(1), cols = field.extent(2);
  Tensor det(Shape{rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const auto F = deformation_gradient(field, r, c);
      det[r * cols + c] = static_cast<float>(F[0] * F[3] - F[1] * F[2]);
    }
  return det;
}

double jacobian_metric(const Tensor& field, const Mask& mask) {
  check_field(field, mask, "jacobian_metric");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < mask.rows; ++r)
    for (std::size_t c = 0; c < mask.cols; ++c) {
      if (!mask(r, c)) continue;
      const auto F = deformation_gradient(field, r, c);
      acc += std::abs(F[0] * F[3] - F[1] * F[2] - 1.0);
      ++n;
    }
  if (n == 0) throw ArgumentError("jacobian_metric: empty mask");
  return acc / static_cast<double>(n);
}

double endpoint_error(const Tensor& a, const Tensor& b, const Mask& mask) {
  if (a.shape() != b.shape() || a.rank() != 4 || a.extent(1) != 2) {
    throw DimensionError("endpoint_error: fields must share a T x 2 x M x N shape");
  }
  if (a.extent(2) != mask.rows || a.extent(3) != mask.cols) throw ArgumentError("endpoint_error: mask grid differs");
  const std::size_t n = mask.rows * mask.cols;
  double acc = 0.0;
  std::size_t cnt = 0;
  for (std::size_t t = 0; t < a.extent(0); ++t)
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask.bits[i]) continue;
      const double dx = static_cast<double>(a[(2 * t) * n + i]) - b[(2 * t) * n + i];
      const double dy = static_cast<double>(a[(2 * t + 1) * n + i]) - b[(2 * t + 1) * n + i];
      acc += std::sqrt(dx * dx + dy * dy);
      ++cnt;
    }
  if (cnt == 0) throw ArgumentError("endpoint_error: empty mask");
  return acc / static_cast<double>(cnt);
}

Mask warp_mask(const Mask& m, const Tensor& field) {
  check_field(field, m, "warp_mask");
  const Tensor img = m.to_tensor();
  const std::size_t n = m.rows * m.cols;
  Mask out(m.rows, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) {
      const std::size_t i = r * m.cols + c;
      const double v = sample_bilinear(img.data(), m.rows, m.cols, c + field[i], r + field[n + i]);
      out.bits[i] = v >= 0.5 ? 1 : 0;
    }
  return out;
}

std::array<double, 2> centroid(const Mask& m) {
  double sc = 0, sr = 0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c)
      if (m(r, c)) {
        sc += c;
        sr += r;
        ++n;
      }
  if (n == 0) throw ArgumentError("centroid of an empty mask");
  return {sc / n, sr / n};
}

Mask enclosed_region(const Mask& m) {
  const std::size_t R = m.rows, C = m.cols;
  std::vector<std::uint8_t> outside(R * C, 0);
  std::vector<std::size_t> stack;
  const auto seed = [&](std::size_t r, std::size_t c) {
    const std::size_t i = r * C + c;
    if (!m.bits[i] && !outside[i]) {
      outside[i] = 1;
      stack.push_back(i);
    }
  };
  for (std::size_t c = 0; c < C; ++c) {
    seed(0, c);
    seed(R - 1, c);
  }
  for (std::size_t r = 0; r < R; ++r) {
    seed(r, 0);
    seed(r, C - 1);
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const std::size_t r = i / C, c = i % C;
    if (r > 0) seed(r - 1, c);
    if (r + 1 < R) seed(r + 1, c);
    if (c > 0) seed(r, c - 1);
    if (c + 1 < C) seed(r, c + 1);
  }
  Mask out(R, C);
  for (std::size_t i = 0; i < R * C; ++i) out.bits[i] = (!m.bits[i] && !outside[i]) ? 1 : 0;
  return out;
}

std::array<double, 2> lv_centroid(const Mask& myocardium, const Mask& cavity) {
  same_grid(myocardium, cavity, "lv_centroid");
  Mask u = myocardium;
  for (std::size_t i = 0; i < u.bits.size(); ++i) u.bits[i] = (myocardium.bits[i] || cavity.bits[i]) ? 1 : 0;
  return centroid(u);
}

StrainValue strain(const Tensor& field, std::array<double, 2> center, const Mask& mask) {
  check_field(field, mask, "strain");
  if (!(center[0] >= 0 && center[0] <= mask.cols - 1.0 && center[1] >= 0 && center[1] <= mask.rows - 1.0)) {
    throw ArgumentError("strain: centre lies outside the grid");
  }
  const auto accumulate = [&](bool full_stencil, std::size_t& n) {
    StrainValue s;
    n = 0;
    for (std::size_t r = 0; r < mask.rows; ++r)
      for (std::size_t c = 0; c < mask.cols; ++c) {
        if (!mask(r, c)) continue;
        if (full_stencil && (r == 0 || c == 0 || r + 1 == mask.rows || c + 1 == mask.cols || !mask(r - 1, c) ||
                             !mask(r + 1, c) || !mask(r, c - 1) || !mask(r, c + 1))) {
          continue;
        }
        const double ex = c - center[0], ey = r - center[1];
        const double len = std::hypot(ex, ey);
        if (len < 1e-9) continue;
        const double er[2] = {ex / len, ey / len};
        const double ec[2] = {-er[1], er[0]};
        const auto F = deformation_gradient(field, r, c);
        // E = (F^T F - I) / 2
        const double c00 = F[0] * F[0] + F[2] * F[2], c01 = F[0] * F[1] + F[2] * F[3], c11 = F[1] * F[1] + F[3] * F[3];
        const double E00 = 0.5 * (c00 - 1.0), E01 = 0.5 * c01, E11 = 0.5 * (c11 - 1.0);
        s.rr_pct += er[0] * er[0] * E00 + 2 * er[0] * er[1] * E01 + er[1] * er[1] * E11;
        s.cc_pct += ec[0] * ec[0] * E00 + 2 * ec[0] * ec[1] * E01 + ec[1] * ec[1] * E11;
        ++n;
      }
    return s;
  };
  std::size_t n = 0;
  StrainValue s = accumulate(true, n);
  if (n == 0) s = accumulate(false, n);
  if (n == 0) throw ArgumentError("strain: empty mask");
  s.rr_pct *= 100.0 / n;
  s.cc_pct *= 100.0 / n;
  return s;
}

StrainCurve strain_curves(const sim::DeformationSequence& seq, std::array<double, 2> center, const Mask& mask) {
  const Tensor& f = seq.fields;
  if (f.rank() != 4 || f.extent(1) != 2) throw DimensionError("strain_curves: fields must be T x 2 x M x N");
  const std::size_t T = f.extent(0), plane = 2 * f.extent(2) * f.extent(3);
  StrainCurve out;
  for (std::size_t t = 0; t < T; ++t) {
    Tensor ft(Shape{2, f.extent(2), f.extent(3)});
    std::copy(f.data() + t * plane, f.data() + (t + 1) * plane, ft.data());
    const auto s = strain(ft, center, mask);
    out.rr_pct.push_back(s.rr_pct);
    out.cc_pct.push_back(s.cc_pct);
  }
  const auto rr = std::max_element(out.rr_pct.begin(), out.rr_pct.end());
  const auto cc = std::min_element(out.cc_pct.begin(), out.cc_pct.end());
  out.peak_rr_frame = static_cast<int>(rr - out.rr_pct.begin());
  out.peak_cc_frame = static_cast<int>(cc - out.cc_pct.begin());
  out.peak_rr_pct = *rr;
  out.peak_cc_pct = *cc;
  return out;
}

double temporal_roughness(const std::vector<double>& v) {
  if (v.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    const double d = v[i + 1] - 2 * v[i] + v[i - 1];
    acc += d * d;
  }
  return acc / static_cast<double>(v.size() - 2);
}

Summary summarize(const std::vector<double>& v) {
  Summary s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

Mask mask_frame(const Tensor& masks, std::size_t t) {
  if (masks.rank() != 3 || t >= masks.extent(0)) throw DimensionError("mask_frame: expected T x M x N and t < T");
  Mask m(masks.extent(1), masks.extent(2));
  const std::size_t n = m.rows * m.cols;
  for (std::size_t i = 0; i < n; ++i) m.bits[i] = masks[t * n + i] > 0.5f ? 1 : 0;
  return m;
}

std::vector<FrameMetrics> evaluate_sequence(const Tensor& fields, const Tensor& masks, double spacing_mm) {
  if (fields.rank() != 4 || fields.extent(1) != 2 || masks.rank() != 3 || masks.extent(0) != fields.extent(0) ||
      masks.extent(1) != fields.extent(2) || masks.extent(2) != fields.extent(3)) {
    throw DimensionError("evaluate_sequence: fields T x 2 x M x N and masks T x M x N must agree");
  }
  const Mask ed = mask_frame(masks, 0);
  const std::size_t plane = 2 * masks.extent(1) * masks.extent(2);
  std::vector<FrameMetrics> out;
  for (std::size_t t = 0; t < fields.extent(0); ++t) {
    Tensor ft(Shape{2, masks.extent(1), masks.extent(2)});
    std::copy(fields.data() + t * plane, fields.data() + (t + 1) * plane, ft.data());
    const Mask warped = warp_mask(mask_frame(masks, t), ft);
    FrameMetrics m;
    m.frame = static_cast<int>(t);
    m.dice = dice(warped, ed);
    m.mcd_mm = warped.count() == 0 ? std::numeric_limits<double>::quiet_NaN() : mcd(warped, ed, spacing_mm);
    m.jac_metric = jacobian_metric(ft, ed);
    out.push_back(m);
  }
  return out;
}

}  // namespace bmtk::metrics
