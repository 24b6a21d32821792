#include "bmtk/core/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bmtk {

std::vector<std::pair<int, int>> disk_offsets(int radius) {
  std::vector<std::pair<int, int>> out;
  for (int dr = -radius; dr <= radius; ++dr) {
    for (int dc = -radius; dc <= radius; ++dc) {
      if (dr * dr + dc * dc <= radius * radius) out.emplace_back(dr, dc);
    }
  }
  return out;
}

Mask dilate_disk(const Mask& mask, int radius) {
  if (radius < 0) throw ArgumentError("dilation radius must be >= 0");
  Mask out(mask.rows, mask.cols);
  const auto offsets = disk_offsets(radius);
  const int rows = static_cast<int>(mask.rows), cols = static_cast<int>(mask.cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!mask(r, c)) continue;
      for (auto [dr, dc] : offsets) {
        const int rr = r + dr, cc = c + dc;
        if (rr >= 0 && rr < rows && cc >= 0 && cc < cols) out.set(rr, cc);
      }
    }
  }
  return out;
}

double sample_bilinear(const float* plane, std::size_t rows, std::size_t cols, double col, double row) {
  if (std::isnan(col) || std::isnan(row)) return std::numeric_limits<double>::quiet_NaN();
  const double cc = std::clamp(col, 0.0, static_cast<double>(cols - 1));
  const double rc = std::clamp(row, 0.0, static_cast<double>(rows - 1));
  const std::size_t c0 = std::min(static_cast<std::size_t>(cc), cols - 1);
  const std::size_t r0 = std::min(static_cast<std::size_t>(rc), rows - 1);
  const std::size_t c1 = std::min(c0 + 1, cols - 1);
  const std::size_t r1 = std::min(r0 + 1, rows - 1);
  const double ac = cc - c0, ar = rc - r0;
  return (1 - ar) * ((1 - ac) * plane[r0 * cols + c0] + ac * plane[r0 * cols + c1]) +
         ar * ((1 - ac) * plane[r1 * cols + c0] + ac * plane[r1 * cols + c1]);
}

void gaussian_blur(float* plane, std::size_t rows, std::size_t cols, double sigma) {
  if (!(sigma > 0.0)) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= total;
  std::vector<double> tmp(rows * cols);
  const int R = static_cast<int>(rows), C = static_cast<int>(cols);
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * plane[r * C + std::clamp(c + i, 0, C - 1)];
      tmp[r * C + c] = acc;
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[std::clamp(r + i, 0, R - 1) * C + c];
      plane[r * C + c] = static_cast<float>(acc);
    }
  }
}

}  // namespace bmtk
