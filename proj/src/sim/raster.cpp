#include "bmtk/sim/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace bmtk::sim {

namespace {

constexpr int kEdgeSamples = 33;

struct Box {
  int r0, r1, c0, c1;
};

// Pixel index range covering an element; curved edges bulge a little past the nodes.
Box pixel_box(const FemMesh& mesh, const Element& e, std::size_t rows, std::size_t cols) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (int a : e) {
    xmin = std::min(xmin, mesh.nodes[a].x());
    xmax = std::max(xmax, mesh.nodes[a].x());
    ymin = std::min(ymin, mesh.nodes[a].y());
    ymax = std::max(ymax, mesh.nodes[a].y());
  }
  const double pad = 0.1 * std::max(xmax - xmin, ymax - ymin);
  const double s = mesh.spacing_mm;
  Box b;
  b.c0 = std::max(0, static_cast<int>(std::floor((xmin - pad) / s)));
  b.c1 = std::min(static_cast<int>(cols) - 1, static_cast<int>(std::ceil((xmax + pad) / s)));
  b.r0 = std::max(0, static_cast<int>(std::floor((ymin - pad) / s)));
  b.r1 = std::min(static_cast<int>(rows) - 1, static_cast<int>(std::ceil((ymax + pad) / s)));
  return b;
}

template <typename Visit>
void for_each_located(const FemMesh& mesh, std::size_t rows, std::size_t cols, Visit&& visit) {
  std::vector<std::uint8_t> done(rows * cols, 0);
  for (const auto& e : mesh.elements) {
    const Box b = pixel_box(mesh, e, rows, cols);
    for (int r = b.r0; r <= b.r1; ++r) {
      for (int c = b.c0; c <= b.c1; ++c) {
        const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
        if (done[idx]) continue;
        double xi = 0.0, eta = 0.0;
        if (!locate_in_element(mesh, e, Vec2(c, r) * mesh.spacing_mm, xi, eta)) continue;
        done[idx] = 1;
        visit(idx, e, xi, eta);
      }
    }
  }
}

}  // namespace

bool locate_in_element(const FemMesh& mesh, const Element& e, const Vec2& x, double& xi, double& eta, double tol) {
  xi = eta = 1.0 / 3.0;
  double scale = 0.0;
  for (int a = 1; a < 3; ++a) scale = std::max(scale, (mesh.nodes[e[a]] - mesh.nodes[e[0]]).norm());
  for (int it = 0; it < 30; ++it) {
    const auto n = p2::shape(xi, eta);
    const auto dn = p2::shape_grad(xi, eta);
    Vec2 pos = Vec2::Zero();
    Eigen::Matrix2d j = Eigen::Matrix2d::Zero();
    for (int a = 0; a < 6; ++a) {
      pos += n[a] * mesh.nodes[e[a]];
      j += mesh.nodes[e[a]] * dn.row(a);
    }
    const Vec2 r = x - pos;
    if (std::abs(j.determinant()) < 1e-300) return false;
    const Vec2 d = j.inverse() * r;
    xi += d.x();
    eta += d.y();
    // far outside the element: the quadratic map is not trustworthy there
    if (std::abs(xi) > 3.0 || std::abs(eta) > 3.0) return false;
    if (r.norm() < 1e-13 * scale && d.norm() < 1e-12) break;
  }
  const auto n = p2::shape(xi, eta);
  Vec2 pos = Vec2::Zero();
  for (int a = 0; a < 6; ++a) pos += n[a] * mesh.nodes[e[a]];
  if ((pos - x).norm() > 1e-9 * std::max(1.0, scale)) return false;
  return xi >= -tol && eta >= -tol && xi + eta <= 1.0 + tol;
}

Rasterizer::Rasterizer(const FemMesh& mesh, std::size_t rows, std::size_t cols, int band_radius)
    : rows_(rows), cols_(cols), spacing_(mesh.spacing_mm), inside_(rows, cols) {
  for_each_located(mesh, rows, cols, [&](std::size_t idx, const Element& e, double xi, double eta) {
    inside_.bits[idx] = 1;
    const auto n = p2::shape(xi, eta);
    Sample s{idx, {}, {}};
    for (int a = 0; a < 6; ++a) {
      s.nodes[a] = e[a];
      s.weights[a] = n[a];
    }
    samples_.push_back(s);
  });
  support_ = dilate_disk(inside_, band_radius);

  // Dense samples along both boundary loops for the band.
  struct EdgePoint {
    Vec2 x;
    std::array<int, 3> nodes;
    std::array<double, 3> weights;
  };
  std::vector<EdgePoint> boundary;
  for (const auto* loop : {&mesh.inner_edges, &mesh.outer_edges}) {
    for (const auto& edge : *loop) {
      for (int k = 0; k < kEdgeSamples; ++k) {
        const double s = -1.0 + 2.0 * k / (kEdgeSamples - 1);
        const auto n = p2::edge_shape(s);
        EdgePoint p{Vec2::Zero(), {edge[0], edge[1], edge[2]}, {n[0], n[1], n[2]}};
        for (int a = 0; a < 3; ++a) p.x += n[a] * mesh.nodes[edge[a]];
        boundary.push_back(p);
      }
    }
  }
  for (std::size_t idx = 0; idx < rows * cols; ++idx) {
    if (!support_.bits[idx] || inside_.bits[idx]) continue;
    const Vec2 x = Vec2(static_cast<double>(idx % cols), static_cast<double>(idx / cols)) * spacing_;
    double best = std::numeric_limits<double>::infinity();
    const EdgePoint* nearest = nullptr;
    for (const auto& p : boundary) {
      const double d = (p.x - x).squaredNorm();
      if (d < best) {
        best = d;
        nearest = &p;
      }
    }
    if (!nearest) continue;
    Sample s{idx, {}, {}};
    for (int a = 0; a < 3; ++a) {
      s.nodes[a] = nearest->nodes[a];
      s.weights[a] = nearest->weights[a];
    }
    for (int a = 3; a < 6; ++a) {
      s.nodes[a] = nearest->nodes[0];
      s.weights[a] = 0.0;
    }
    samples_.push_back(s);
  }
}

void Rasterizer::field_into(const Eigen::VectorXd& nodal_mm, float* dst) const {
  const std::size_t plane = rows_ * cols_;
  std::fill(dst, dst + 2 * plane, 0.0f);
  for (const auto& s : samples_) {
    double ux = 0.0, uy = 0.0;
    for (int a = 0; a < 6; ++a) {
      ux += s.weights[a] * nodal_mm[2 * s.nodes[a]];
      uy += s.weights[a] * nodal_mm[2 * s.nodes[a] + 1];
    }
    dst[s.pixel] = static_cast<float>(ux / spacing_);
    dst[plane + s.pixel] = static_cast<float>(uy / spacing_);
  }
}

Tensor Rasterizer::field(const Eigen::VectorXd& nodal_mm) const {
  Tensor out(Shape{2, rows_, cols_});
  field_into(nodal_mm, out.data());
  return out;
}

Mask mesh_mask(const FemMesh& mesh, std::size_t rows, std::size_t cols) {
  Mask m(rows, cols);
  for_each_located(mesh, rows, cols, [&](std::size_t idx, const Element&, double, double) { m.bits[idx] = 1; });
  return m;
}

Mask cavity_mask(const FemMesh& mesh, std::size_t rows, std::size_t cols) {
  // even-odd test against a dense polyline of the inner loop
  std::vector<Vec2> poly;
  for (const auto& edge : mesh.inner_edges) {
    for (int k = 0; k < kEdgeSamples - 1; ++k) {
      const double s = -1.0 + 2.0 * k / (kEdgeSamples - 1);
      const auto n = p2::edge_shape(s);
      Vec2 x = Vec2::Zero();
      for (int a = 0; a < 3; ++a) x += n[a] * mesh.nodes[edge[a]];
      poly.push_back(x);
    }
  }
  const Mask myo = mesh_mask(mesh, rows, cols);
  Mask m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (myo(r, c)) continue;
      const Vec2 x = Vec2(static_cast<double>(c), static_cast<double>(r)) * mesh.spacing_mm;
      bool in = false;
      for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        if ((a.y() > x.y()) != (b.y() > x.y()) &&
            x.x() < (b.x() - a.x()) * (x.y() - a.y()) / (b.y() - a.y()) + a.x()) {
          in = !in;
        }
      }
      if (in) m.set(r, c);
    }
  }
  return m;
}

Tensor rasterize(const FemMesh& mesh, const Eigen::VectorXd& nodal_mm, std::size_t rows, std::size_t cols,
                 int band_radius) {
  return Rasterizer(mesh, rows, cols, band_radius).field(nodal_mm);
}

}  // namespace bmtk::sim
