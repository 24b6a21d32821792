#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "bmtk/core/grid.hpp"
#include "bmtk/core/tensor.hpp"
#include "bmtk/sim/mesh.hpp"

namespace bmtk::sim {

/// Pixel-centre sampling of nodal fields defined on a fixed mesh.
/// Pixel (r, c) sits at (c, r) * spacing in mesh coordinates.
/// Inside the mesh values come from the quadratic shape functions; in the band
/// dilate(inside, band_radius) \ inside the value at the nearest boundary point is
/// copied; everything else is zero.
class Rasterizer {
 public:
  Rasterizer(const FemMesh& mesh, std::size_t rows, std::size_t cols, int band_radius = 3);

  /// Samples a 2-per-node nodal vector (mm) into a 2 x M x N field in pixels.
  /// Channel 0 is the column (x) component, channel 1 the row (y) component.
  Tensor field(const Eigen::VectorXd& nodal_mm) const;
  /// Writes into dst[0 .. 2*M*N).
  void field_into(const Eigen::VectorXd& nodal_mm, float* dst) const;

  /// Pixels whose centres lie in the mesh.
  const Mask& inside() const { return inside_; }
  /// inside() dilated by the band radius.
  const Mask& support() const { return support_; }

 private:
  struct Sample {
    std::size_t pixel;
    std::array<int, 6> nodes;
    std::array<double, 6> weights;
  };
  std::size_t rows_, cols_;
  double spacing_;
  Mask inside_, support_;
  std::vector<Sample> samples_;
};

/// Locates x in an element by inverting the isoparametric map. Returns false
/// when x lies outside (tolerance tol in reference coordinates).
bool locate_in_element(const FemMesh& mesh, const Element& e, const Vec2& x, double& xi, double& eta,
                       double tol = 1e-10);

/// Pixel-centre membership of the mesh (myocardium).
Mask mesh_mask(const FemMesh& mesh, std::size_t rows, std::size_t cols);
/// Pixel centres strictly inside the inner boundary loop (cavity).
Mask cavity_mask(const FemMesh& mesh, std::size_t rows, std::size_t cols);

/// One-shot nodal-to-pixel conversion; see Rasterizer.
Tensor rasterize(const FemMesh& mesh, const Eigen::VectorXd& nodal_mm, std::size_t rows, std::size_t cols,
                 int band_radius = 3);

}  // namespace bmtk::sim
