#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace bmtk::sim {

using Vec2 = Eigen::Vector2d;

/// Six-node triangle: corners 0, 1, 2 (counter-clockwise), then midside
/// nodes on edges 0-1, 1-2 and 2-0.
using Element = std::array<int, 6>;
/// Quadratic boundary edge (start corner, midside, end corner).
using Edge = std::array<int, 3>;

/// Annular myocardium mesh. Coordinates are in millimetres in the image frame
/// where pixel (row r, col c) has its centre at (c, r) * spacing.
/// Inner edges run counter-clockwise about the cavity, as do outer edges.
struct FemMesh {
  std::vector<Vec2> nodes;
  std::vector<Element> elements;
  std::vector<Edge> inner_edges;
  std::vector<Edge> outer_edges;
  std::vector<int> inner_nodes;
  std::vector<int> outer_nodes;
  double spacing_mm = 1.0;

  std::size_t dofs() const { return 2 * nodes.size(); }
  /// Copy with node coordinates moved by `displacement` (2 values per node, mm).
  FemMesh displaced(const Eigen::VectorXd& displacement) const;
};

struct AnnulusSpec {
  double inner_radius_px = 20.0;
  double outer_radius_px = 32.0;
  Vec2 center_px{48.0, 48.0};
  int target_elements = 600;
  std::size_t grid_rows = 96;
  std::size_t grid_cols = 96;
  double spacing_mm = 1.8;
  /// Required clearance between the annulus and the grid border, in pixels.
  double margin_px = 3.0;
};

/// Structured polar mesh of quadratic triangles with nodes placed on exact arcs.
/// Throws GeometryError when the radii are not ordered or the annulus does not fit.
FemMesh build_annulus_mesh(const AnnulusSpec& spec);

namespace p2 {

/// Shape function values at area coordinates (xi, eta).
std::array<double, 6> shape(double xi, double eta);
/// Derivatives d/dxi (column 0) and d/deta (column 1).
Eigen::Matrix<double, 6, 2> shape_grad(double xi, double eta);

struct QuadPoint {
  double xi, eta, weight;
};
/// Degree-4 six-point rule on the reference triangle (weights sum to 1/2).
const std::array<QuadPoint, 6>& quadrature();

/// Quadratic edge shape functions on [-1, 1] with nodes at -1, 0, 1.
std::array<double, 3> edge_shape(double s);
std::array<double, 3> edge_shape_deriv(double s);

}  // namespace p2

/// Isoparametric Jacobian det at a reference point for the given node positions.
double element_jacobian(const FemMesh& mesh, const Element& e, double xi, double eta);
/// Area of one element by Gauss quadrature.
double element_area(const FemMesh& mesh, const Element& e);
/// Total myocardial area (sum of element areas), mm^2.
double mesh_area(const FemMesh& mesh);
/// Area enclosed by a closed chain of quadratic edges (contour integral), mm^2.
double enclosed_area(const FemMesh& mesh, const std::vector<Edge>& loop);
/// Area of myocardium plus cavity, i.e. the region inside the outer boundary.
double region_area(const FemMesh& mesh);
/// Centroid of the region inside the outer boundary, mm.
Vec2 region_centroid(const FemMesh& mesh);
/// Smallest element Jacobian over all quadrature points and nodes.
double min_jacobian(const FemMesh& mesh);

}  // namespace bmtk::sim
