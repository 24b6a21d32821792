#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bmtk/sim/raster.hpp"

using namespace bmtk;
using namespace bmtk::sim;

namespace {

FemMesh annulus() { return build_annulus_mesh(AnnulusSpec{}); }

}  // namespace

TEST_CASE("rasterized constant field is the constant on every in-mesh pixel") {
  const FemMesh mesh = annulus();
  Eigen::VectorXd u(mesh.dofs());
  for (std::size_t a = 0; a < mesh.nodes.size(); ++a) {
    u[2 * a] = 0.9;    // mm
    u[2 * a + 1] = -2.7;
  }
  const Rasterizer ras(mesh, 96, 96, 3);
  const Tensor f = ras.field(u);
  REQUIRE(f.shape() == Shape{2, 96, 96});
  std::size_t in = 0;
  for (std::size_t i = 0; i < 96 * 96; ++i) {
    if (!ras.support().bits[i]) {
      CHECK(f[i] == 0.0f);
      CHECK(f[96 * 96 + i] == 0.0f);
      continue;
    }
    // band pixels copy a boundary value, so they are constant too
    CHECK(f[i] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(f[96 * 96 + i] == doctest::Approx(-1.5).epsilon(1e-6));
    in += ras.inside().bits[i];
  }
  CHECK(in > 1800);
}

TEST_CASE("rasterized linear field is reproduced exactly inside the mesh") {
  const FemMesh mesh = annulus();
  Eigen::Matrix2d a;
  a << 0.05, -0.02, 0.03, 0.08;
  const Vec2 b(0.4, -0.1);
  Eigen::VectorXd u(mesh.dofs());
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n) u.segment<2>(2 * n) = a * mesh.nodes[n] + b;
  const Rasterizer ras(mesh, 96, 96, 3);
  const Tensor f = ras.field(u);
  double worst = 0.0;
  for (std::size_t r = 0; r < 96; ++r) {
    for (std::size_t c = 0; c < 96; ++c) {
      if (!ras.inside()(r, c)) continue;
      const Vec2 x = Vec2(c, r) * mesh.spacing_mm;
      const Vec2 expect = (a * x + b) / mesh.spacing_mm;
      worst = std::max(worst, std::abs(f[r * 96 + c] - expect.x()));
      worst = std::max(worst, std::abs(f[96 * 96 + r * 96 + c] - expect.y()));
    }
  }
  // float storage is the only source of error
  CHECK(worst < 1e-5);
}

TEST_CASE("pixel on a node takes that node's value") {
  const FemMesh mesh = annulus();
  // theta = 0 on the inner ring sits exactly on pixel (48, 68)
  int node = -1;
  for (std::size_t n = 0; n < mesh.nodes.size(); ++n) {
    if ((mesh.nodes[n] - Vec2(68, 48) * mesh.spacing_mm).norm() < 1e-9) node = static_cast<int>(n);
  }
  REQUIRE(node >= 0);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(mesh.dofs());
  u[2 * node] = 1.8;
  u[2 * node + 1] = 3.6;
  const Tensor f = rasterize(mesh, u, 96, 96);
  CHECK(f[48 * 96 + 68] == doctest::Approx(1.0));
  CHECK(f[96 * 96 + 48 * 96 + 68] == doctest::Approx(2.0));
}

TEST_CASE("mesh and cavity masks match the analytic areas") {
  const FemMesh mesh = annulus();
  const Mask myo = mesh_mask(mesh, 96, 96);
  const Mask cav = cavity_mask(mesh, 96, 96);
  const double pi = std::numbers::pi;
  CHECK(std::abs(myo.count() - pi * (32 * 32 - 20 * 20)) / (pi * (32 * 32 - 20 * 20)) < 0.02);
  CHECK(std::abs(cav.count() - pi * 20 * 20) / (pi * 20 * 20) < 0.02);
  for (std::size_t i = 0; i < myo.bits.size(); ++i) CHECK_FALSE((myo.bits[i] && cav.bits[i]));
  CHECK(cav(48, 48));
  CHECK_FALSE(myo(48, 48));
  CHECK(myo(48, 48 + 26));
}
