#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bmtk/core/tensor.hpp"

namespace bmtk {

/// Binary mask on an M x N pixel grid, row-major.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t r, std::size_t c) : rows(r), cols(c), bits(r * c, 0) {}

  bool operator()(std::size_t r, std::size_t c) const { return bits[r * cols + c] != 0; }
  void set(std::size_t r, std::size_t c, bool on = true) { bits[r * cols + c] = on ? 1 : 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
  bool same_grid(const Mask& other) const { return rows == other.rows && cols == other.cols; }
  bool operator==(const Mask&) const = default;

  Tensor to_tensor() const {
    Tensor t(Shape{rows, cols});
    for (std::size_t i = 0; i < bits.size(); ++i) t[i] = bits[i] ? 1.0f : 0.0f;
    return t;
  }
  static Mask from_tensor(const Tensor& t, float threshold = 0.5f) {
    if (t.rank() != 2) throw DimensionError("mask tensor must be rank 2, got " + shape_str(t.shape()));
    Mask m(t.extent(0), t.extent(1));
    for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = t[i] > threshold ? 1 : 0;
    return m;
  }
};

/// Offsets (dr, dc) of the discrete disk dr^2 + dc^2 <= radius^2.
std::vector<std::pair<int, int>> disk_offsets(int radius);

/// Morphological dilation by the discrete disk of the given radius.
Mask dilate_disk(const Mask& mask, int radius);

/// Bilinear sample of an M x N plane at (col, row) with clamp-to-edge.
double sample_bilinear(const float* plane, std::size_t rows, std::size_t cols, double col, double row);

/// Separable Gaussian blur in place, clamp-to-edge, kernel radius ceil(3 sigma).
void gaussian_blur(float* plane, std::size_t rows, std::size_t cols, double sigma);

}  // namespace bmtk
