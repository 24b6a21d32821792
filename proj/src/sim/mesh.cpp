#include "bmtk/sim/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "bmtk/errors.hpp"

namespace bmtk::sim {

namespace p2 {

std::array<double, 6> shape(double xi, double eta) {
  const double l1 = 1.0 - xi - eta, l2 = xi, l3 = eta;
  return {l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), l3 * (2 * l3 - 1), 4 * l1 * l2, 4 * l2 * l3, 4 * l3 * l1};
}

Eigen::Matrix<double, 6, 2> shape_grad(double xi, double eta) {
  const double l1 = 1.0 - xi - eta;
  Eigen::Matrix<double, 6, 2> d;
  d << -(4 * l1 - 1), -(4 * l1 - 1),  //
      4 * xi - 1, 0.0,                //
      0.0, 4 * eta - 1,               //
      4 * (l1 - xi), -4 * xi,         //
      4 * eta, 4 * xi,                //
      -4 * eta, 4 * (l1 - eta);
  return d;
}

const std::array<QuadPoint, 6>& quadrature() {
  static const std::array<QuadPoint, 6> rule = [] {
    constexpr double a = 0.445948490915965, wa = 0.223381589678011 / 2;
    constexpr double b = 0.091576213509771, wb = 0.109951743655322 / 2;
    return std::array<QuadPoint, 6>{QuadPoint{a, a, wa},         QuadPoint{1 - 2 * a, a, wa},
                                    QuadPoint{a, 1 - 2 * a, wa}, QuadPoint{b, b, wb},
                                    QuadPoint{1 - 2 * b, b, wb}, QuadPoint{b, 1 - 2 * b, wb}};
  }();
  return rule;
}

std::array<double, 3> edge_shape(double s) { return {0.5 * s * (s - 1), 1 - s * s, 0.5 * s * (s + 1)}; }

std::array<double, 3> edge_shape_deriv(double s) { return {s - 0.5, -2 * s, s + 0.5}; }

}  // namespace p2

namespace {

constexpr std::array<double, 3> kGaussEdgePoints{-0.774596669241483, 0.0, 0.774596669241483};
constexpr std::array<double, 3> kGaussEdgeWeights{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

// Position and tangent along a quadratic edge at parameter s.
std::pair<Vec2, Vec2> edge_point(const FemMesh& mesh, const Edge& e, double s) {
  const auto n = p2::edge_shape(s);
  const auto dn = p2::edge_shape_deriv(s);
  Vec2 x = Vec2::Zero(), t = Vec2::Zero();
  for (int a = 0; a < 3; ++a) {
    x += n[a] * mesh.nodes[e[a]];
    t += dn[a] * mesh.nodes[e[a]];
  }
  return {x, t};
}

}  // namespace

FemMesh FemMesh::displaced(const Eigen::VectorXd& displacement) const {
  FemMesh out = *this;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    out.nodes[i] += Vec2(displacement[2 * i], displacement[2 * i + 1]);
  }
  return out;
}

FemMesh build_annulus_mesh(const AnnulusSpec& spec) {
  if (!(spec.inner_radius_px > 0.0) || !(spec.outer_radius_px > spec.inner_radius_px)) {
    throw GeometryError("annulus requires 0 < inner radius < outer radius (got " +
                        std::to_string(spec.inner_radius_px) + ", " + std::to_string(spec.outer_radius_px) + ")");
  }
  const double reach = spec.outer_radius_px + spec.margin_px;
  const double max_r = static_cast<double>(spec.grid_rows) - 1.0;
  const double max_c = static_cast<double>(spec.grid_cols) - 1.0;
  if (spec.center_px.x() - reach < 0.0 || spec.center_px.x() + reach > max_c ||
      spec.center_px.y() - reach < 0.0 || spec.center_px.y() + reach > max_r) {
    throw GeometryError("annulus with margin exceeds the image grid");
  }
  if (spec.target_elements < 12) throw GeometryError("annulus mesh needs at least 12 elements");

  const double thickness = spec.outer_radius_px - spec.inner_radius_px;
  const double mid_circ = std::numbers::pi * (spec.inner_radius_px + spec.outer_radius_px);
  const int n_r = std::max(1, static_cast<int>(std::lround(std::sqrt(spec.target_elements / 2.0 * thickness / mid_circ))));
  const int n_t = std::max(6, static_cast<int>(std::lround(spec.target_elements / (2.0 * n_r))));

  const int ring = 2 * n_t;
  auto id = [ring](int i, int j) { return i * ring + ((j % ring) + ring) % ring; };

  FemMesh mesh;
  mesh.spacing_mm = spec.spacing_mm;
  mesh.nodes.reserve(static_cast<std::size_t>((2 * n_r + 1) * ring));
  for (int i = 0; i <= 2 * n_r; ++i) {
    const double r = spec.inner_radius_px + thickness * i / (2.0 * n_r);
    for (int j = 0; j < ring; ++j) {
      const double th = 2.0 * std::numbers::pi * j / ring;
      mesh.nodes.emplace_back((spec.center_px.x() + r * std::cos(th)) * spec.spacing_mm,
                              (spec.center_px.y() + r * std::sin(th)) * spec.spacing_mm);
    }
  }
  for (int a = 0; a < n_r; ++a) {
    for (int b = 0; b < n_t; ++b) {
      const int i = 2 * a, j = 2 * b;
      mesh.elements.push_back(
          {id(i, j), id(i + 2, j), id(i + 2, j + 2), id(i + 1, j), id(i + 2, j + 1), id(i + 1, j + 1)});
      mesh.elements.push_back(
          {id(i, j), id(i + 2, j + 2), id(i, j + 2), id(i + 1, j + 1), id(i + 1, j + 2), id(i, j + 1)});
    }
  }
  for (int b = 0; b < n_t; ++b) {
    mesh.inner_edges.push_back({id(0, 2 * b), id(0, 2 * b + 1), id(0, 2 * b + 2)});
    mesh.outer_edges.push_back({id(2 * n_r, 2 * b), id(2 * n_r, 2 * b + 1), id(2 * n_r, 2 * b + 2)});
  }
  for (int j = 0; j < ring; ++j) {
    mesh.inner_nodes.push_back(id(0, j));
    mesh.outer_nodes.push_back(id(2 * n_r, j));
  }
  return mesh;
}

double element_jacobian(const FemMesh& mesh, const Element& e, double xi, double eta) {
  const auto dn = p2::shape_grad(xi, eta);
  Eigen::Matrix2d j = Eigen::Matrix2d::Zero();
  for (int a = 0; a < 6; ++a) j += mesh.nodes[e[a]] * dn.row(a);
  return j.determinant();
}

double element_area(const FemMesh& mesh, const Element& e) {
  double area = 0.0;
  for (const auto& q : p2::quadrature()) area += q.weight * element_jacobian(mesh, e, q.xi, q.eta);
  return area;
}

double mesh_area(const FemMesh& mesh) {
  double total = 0.0;
  for (const auto& e : mesh.elements) total += element_area(mesh, e);
  return total;
}

double enclosed_area(const FemMesh& mesh, const std::vector<Edge>& loop) {
  double twice = 0.0;
  for (const auto& e : loop) {
    for (int q = 0; q < 3; ++q) {
      const auto [x, t] = edge_point(mesh, e, kGaussEdgePoints[q]);
      twice += kGaussEdgeWeights[q] * (x.x() * t.y() - x.y() * t.x());
    }
  }
  return 0.5 * twice;
}

double region_area(const FemMesh& mesh) { return mesh_area(mesh) + enclosed_area(mesh, mesh.inner_edges); }

Vec2 region_centroid(const FemMesh& mesh) {
  double area2 = 0.0, mx = 0.0, my = 0.0;
  for (const auto& e : mesh.outer_edges) {
    for (int q = 0; q < 3; ++q) {
      const auto [x, t] = edge_point(mesh, e, kGaussEdgePoints[q]);
      const double w = kGaussEdgeWeights[q];
      area2 += w * (x.x() * t.y() - x.y() * t.x());
      mx += w * 0.5 * x.x() * x.x() * t.y();
      my -= w * 0.5 * x.y() * x.y() * t.x();
    }
  }
  const double area = 0.5 * area2;
  return Vec2(mx / area, my / area);
}

double min_jacobian(const FemMesh& mesh) {
  static constexpr std::array<std::array<double, 2>, 6> kNodes{
      {{0, 0}, {1, 0}, {0, 1}, {0.5, 0}, {0.5, 0.5}, {0, 0.5}}};
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& e : mesh.elements) {
    for (const auto& q : p2::quadrature()) lo = std::min(lo, element_jacobian(mesh, e, q.xi, q.eta));
    for (const auto& n : kNodes) lo = std::min(lo, element_jacobian(mesh, e, n[0], n[1]));
  }
  return lo;
}

}  // namespace bmtk::sim
