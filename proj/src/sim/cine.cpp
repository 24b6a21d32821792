#include "bmtk/sim/cine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "bmtk/errors.hpp"

namespace bmtk::sim {

Tensor make_ed_image(const Mask& myo, const Mask& cavity, Rng& rng, const CineTexture& tex) {
  if (!myo.same_grid(cavity)) throw DimensionError("myocardium and cavity masks differ in size");
  const std::size_t rows = myo.rows, cols = myo.cols, n = rows * cols;
  std::vector<float> speckle(n);
  for (auto& v : speckle) v = static_cast<float>(rng.normal());
  gaussian_blur(speckle.data(), rows, cols, tex.speckle_sigma);
  float peak = 0.0f;
  for (std::size_t i = 0; i < n; ++i) {
    if (myo.bits[i]) peak = std::max(peak, std::abs(speckle[i]));
  }
  Tensor img(Shape{rows, cols}, tex.background);
  for (std::size_t i = 0; i < n; ++i) {
    if (myo.bits[i]) {
      img[i] = tex.myocardium + (peak > 0.0f ? tex.speckle_amplitude * speckle[i] / peak : 0.0f);
    } else if (cavity.bits[i]) {
      img[i] = tex.cavity;
    }
  }
  gaussian_blur(img.data(), rows, cols, tex.blur_sigma);
  for (auto& v : img.storage()) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

namespace {

// Bilinear field value and its spatial Jacobian at (x, y) = (col, row), clamped.
struct FieldSample {
  Eigen::Vector2d value;
  Eigen::Matrix2d grad;  // d phi_i / d (x, y)
};

FieldSample sample_field(const float* px, const float* py, std::size_t rows, std::size_t cols, double x, double y) {
  const double xc = std::clamp(x, 0.0, cols - 1.0), yc = std::clamp(y, 0.0, rows - 1.0);
  const std::size_t c0 = std::min(static_cast<std::size_t>(xc), cols - 2);
  const std::size_t r0 = std::min(static_cast<std::size_t>(yc), rows - 2);
  const double ax = xc - c0, ay = yc - r0;
  const bool inside_x = x > 0.0 && x < cols - 1.0, inside_y = y > 0.0 && y < rows - 1.0;
  FieldSample s;
  for (int ch = 0; ch < 2; ++ch) {
    const float* p = ch == 0 ? px : py;
    const double v00 = p[r0 * cols + c0], v01 = p[r0 * cols + c0 + 1];
    const double v10 = p[(r0 + 1) * cols + c0], v11 = p[(r0 + 1) * cols + c0 + 1];
    s.value[ch] = (1 - ay) * ((1 - ax) * v00 + ax * v01) + ay * ((1 - ax) * v10 + ax * v11);
    s.grad(ch, 0) = inside_x ? (1 - ay) * (v01 - v00) + ay * (v11 - v10) : 0.0;
    s.grad(ch, 1) = inside_y ? (1 - ax) * (v10 - v00) + ax * (v11 - v01) : 0.0;
  }
  return s;
}

}  // namespace

Tensor synthesize_cine(const Tensor& ed, const Tensor& fields) {
  if (ed.rank() != 2) throw DimensionError("ED image must be M x N, got " + shape_str(ed.shape()));
  const std::size_t rows = ed.extent(0), cols = ed.extent(1);
  if (fields.rank() != 4 || fields.extent(1) != 2 || fields.extent(2) != rows || fields.extent(3) != cols) {
    throw DimensionError("fields must be T x 2 x " + std::to_string(rows) + " x " + std::to_string(cols) + ", got " +
                         shape_str(fields.shape()));
  }
  if (rows < 2 || cols < 2) throw DimensionError("image grid must be at least 2 x 2");
  for (float v : ed.values()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ArgumentError("ED image values must lie in [0, 1]");
  }
  if (!fields.all_finite()) throw ArgumentError("fields contain non-finite values");

  const std::size_t T = fields.extent(0), plane = rows * cols;
  Tensor out(Shape{T, rows, cols});
  for (std::size_t t = 0; t < T; ++t) {
    const float* px = fields.data() + t * 2 * plane;
    const float* py = px + plane;
    float* dst = out.data() + t * plane;
    double reach = 0.0;
    std::vector<std::uint8_t> moving(plane, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      reach = std::max(reach, std::hypot(static_cast<double>(px[i]), static_cast<double>(py[i])));
      moving[i] = px[i] != 0.0f || py[i] != 0.0f;
    }
    const int window = static_cast<int>(std::ceil(reach)) + 1;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const Eigen::Vector2d target(static_cast<double>(c), static_cast<double>(r));
        double best_res = 1e300;
        Eigen::Vector2d best_y;
        bool found = false;
        // Newton from every moving grid point whose image lands near the target.
        for (int dr = -window; dr <= window; ++dr) {
          for (int dc = -window; dc <= window; ++dc) {
            const long yr = static_cast<long>(r) + dr, yc = static_cast<long>(c) + dc;
            if (yr < 0 || yc < 0 || yr >= static_cast<long>(rows) || yc >= static_cast<long>(cols)) continue;
            const std::size_t k = static_cast<std::size_t>(yr) * cols + static_cast<std::size_t>(yc);
            if (!moving[k]) continue;
            const Eigen::Vector2d y0(static_cast<double>(yc), static_cast<double>(yr));
            if ((y0 + Eigen::Vector2d(px[k], py[k]) - target).lpNorm<Eigen::Infinity>() > 1.5) continue;
            Eigen::Vector2d y = y0;
            double res = 1e300;
            for (int it = 0; it < 20; ++it) {
              const FieldSample s = sample_field(px, py, rows, cols, y.x(), y.y());
              const Eigen::Vector2d g = y + s.value - target;
              res = g.norm();
              if (res < 1e-6) break;
              const Eigen::Matrix2d j = Eigen::Matrix2d::Identity() + s.grad;
              if (std::abs(j.determinant()) < 1e-8) break;
              y -= j.inverse() * g;
            }
            if (res < 1e-4 && res < best_res) {
              best_res = res;
              best_y = y;
              found = true;
            }
          }
        }
        const std::size_t idx = r * cols + c;
        if (found) {
          dst[idx] = static_cast<float>(sample_bilinear(ed.data(), rows, cols, best_y.x(), best_y.y()));
        } else {
          dst[idx] = ed[idx];  // static pixel, or nothing maps here
        }
      }
    }
  }
  return out;
}

}  // namespace bmtk::sim
