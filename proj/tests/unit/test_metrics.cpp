#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "bmtk/errors.hpp"
#include "bmtk/metrics/metrics.hpp"
#include "bmtk/sim/simulate.hpp"

using namespace bmtk;
using namespace bmtk::metrics;

namespace {

Mask disk(std::size_t n, double cx, double cy, double rad) {
  Mask m(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) m.set(r, c, std::hypot(c - cx, r - cy) <= rad);
  return m;
}

Mask ring(std::size_t n, double cx, double cy, double r0, double r1) {
  Mask m(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double d = std::hypot(c - cx, r - cy);
      m.set(r, c, d >= r0 && d <= r1);
    }
  return m;
}

// Brute force over all pixel pairs: contour pixel = inside with an outside 4-neighbour.
double oracle_mcd(const Mask& a, const Mask& b, double sp) {
  const auto contour = [](const Mask& m) {
    std::vector<std::pair<double, double>> pts;
    const long R = m.rows, C = m.cols;
    for (long r = 0; r < R; ++r)
      for (long c = 0; c < C; ++c) {
        if (!m(r, c)) continue;
        bool edge = false;
        const long dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const long rr = r + dr[k], cc = c + dc[k];
          if (rr < 0 || cc < 0 || rr >= R || cc >= C || !m(rr, cc)) edge = true;
        }
        if (edge) pts.emplace_back(r, c);
      }
    return pts;
  };
  const auto pa = contour(a), pb = contour(b);
  const auto dir = [](const auto& p, const auto& q) {
    double s = 0;
    for (auto [r, c] : p) {
      double best = 1e300;
      for (auto [r2, c2] : q) best = std::min(best, std::hypot(r - r2, c - c2));
      s += best;
    }
    return s / p.size();
  };
  return 0.5 * (dir(pa, pb) + dir(pb, pa)) * sp;
}

Tensor affine_field(std::size_t n, double a, double b, double c, double d, double cx, double cy) {
  // u(x) = A (x - centre), A = [[a, b], [c, d]]
  Tensor f(Shape{2, n, n});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t col = 0; col < n; ++col) {
      const double x = col - cx, y = r - cy;
      f[r * n + col] = static_cast<float>(a * x + b * y);
      f[n * n + r * n + col] = static_cast<float>(c * x + d * y);
    }
  return f;
}

}  // namespace

TEST_CASE("dice") {
  const Mask a = disk(20, 8, 8, 4);
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(Mask(20, 20), Mask(20, 20)) == 1.0);
  CHECK(dice(disk(20, 3, 3, 2), disk(20, 15, 15, 2)) == 0.0);
  Mask x(20, 20), y(20, 20);
  for (int i = 0; i < 100; ++i) x.bits[i] = 1;
  for (int i = 50; i < 150; ++i) y.bits[i] = 1;
  CHECK(dice(x, y) == doctest::Approx(0.5));
  CHECK(dice(y, x) == dice(x, y));
  CHECK_THROWS_AS(dice(Mask(3, 4), Mask(4, 3)), ArgumentError);
}

TEST_CASE("mean contour distance") {
  const Mask a = disk(40, 19.5, 20.2, 10), b = disk(40, 19.5, 20.2, 12);
  CHECK(mcd(a, a, 1.8) == 0.0);
  const double v = mcd(a, b, 1.8);
  CHECK(v == doctest::Approx(oracle_mcd(a, b, 1.8)).epsilon(1e-12));
  CHECK(std::abs(v - 3.6) < 0.3);
  CHECK(mcd(b, a, 1.8) == doctest::Approx(v));
  // one-pixel erosion
  Mask inner(40, 40);
  for (std::size_t r = 1; r + 1 < 40; ++r)
    for (std::size_t c = 1; c + 1 < 40; ++c)
      inner.set(r, c, b(r, c) && b(r - 1, c) && b(r + 1, c) && b(r, c - 1) && b(r, c + 1));
  CHECK(std::abs(mcd(inner, b, 1.8) - 1.8) < 0.2);
  CHECK_THROWS_AS(mcd(Mask(40, 40), b, 1.8), ArgumentError);
}

TEST_CASE("jacobian metric") {
  const Mask m = ring(40, 20, 20, 6, 12);
  CHECK(jacobian_metric(Tensor(Shape{2, 40, 40}), m) == 0.0);
  const Tensor s = affine_field(40, 0.1, 0, 0, 0.1, 20, 20);
  CHECK(jacobian_metric(s, m) == doctest::Approx(0.21).epsilon(1e-5));
  Tensor shifted = s;
  for (std::size_t i = 0; i < 1600; ++i) {
    shifted[i] += 3.25f;
    shifted[1600 + i] -= 1.5f;
  }
  CHECK(jacobian_metric(shifted, m) == doctest::Approx(0.21).epsilon(1e-5));
  CHECK_THROWS_AS(jacobian_metric(s, Mask(40, 40)), ArgumentError);
  const Tensor det = jacobian_determinant(s);
  for (float v : det.values()) CHECK(v == doctest::Approx(1.21).epsilon(1e-5));
}

TEST_CASE("strain closed forms") {
  const Mask m = ring(48, 24, 24, 8, 16);
  const std::array<double, 2> c{24, 24};
  SUBCASE("zero field") {
    const auto s = strain(Tensor(Shape{2, 48, 48}), c, m);
    CHECK(s.rr_pct == 0.0);
    CHECK(s.cc_pct == 0.0);
  }
  SUBCASE("rigid motions") {
    for (double th : {0.05, 0.3, -0.7}) {
      const double co = std::cos(th), si = std::sin(th);
      Tensor f = affine_field(48, co - 1, -si, si, co - 1, 21, 26);
      for (std::size_t i = 0; i < 48 * 48; ++i) {
        f[i] += 1.5f;
        f[48 * 48 + i] -= 0.75f;
      }
      const auto s = strain(f, c, m);
      CHECK(std::abs(s.rr_pct) < 1e-5);
      CHECK(std::abs(s.cc_pct) < 1e-5);
    }
  }
  SUBCASE("uniform dilation") {
    const double sc = 1.2;
    const auto s = strain(affine_field(48, sc - 1, 0, 0, sc - 1, 24, 24), c, m);
    CHECK(s.rr_pct == doctest::Approx((sc * sc - 1) / 2 * 100).epsilon(1e-5));
    CHECK(s.cc_pct == doctest::Approx(22.0).epsilon(1e-5));
  }
  SUBCASE("radial stretch is picked up by RR only") {
    // u = a (x - c) along e_r scaled by |x - c|: for a ring, F e_r ~ (1 + a) e_r
    Tensor f(Shape{2, 48, 48});
    for (std::size_t r = 0; r < 48; ++r)
      for (std::size_t col = 0; col < 48; ++col) {
        const double x = col - 24.0, y = r - 24.0, len = std::hypot(x, y);
        if (len < 1e-9) continue;
        // u_r = 0.1 (|x| - 12): radial strain 0.1, circumferential (u_r/r) varies
        const double ur = 0.1 * (len - 12.0);
        f[r * 48 + col] = static_cast<float>(ur * x / len);
        f[48 * 48 + r * 48 + col] = static_cast<float>(ur * y / len);
      }
    const auto s = strain(f, c, m);
    CHECK(s.rr_pct == doctest::Approx((1.1 * 1.1 - 1) / 2 * 100).epsilon(0.02));
  }
  CHECK_THROWS_AS(strain(Tensor(Shape{2, 48, 48}), c, Mask(48, 48)), ArgumentError);
  CHECK_THROWS_AS(strain(Tensor(Shape{2, 48, 48}), {60, 2}, m), ArgumentError);
}

TEST_CASE("strain curves, roughness and summaries") {
  sim::DeformationSequence z;
  z.fields = Tensor(Shape{5, 2, 32, 32});
  const auto sc = strain_curves(z, {16, 16}, ring(32, 16, 16, 5, 10));
  CHECK(sc.rr_pct == std::vector<double>(5, 0.0));
  CHECK(sc.cc_pct == std::vector<double>(5, 0.0));
  CHECK(sc.peak_rr_pct == 0.0);
  CHECK(sc.peak_cc_pct == 0.0);

  CHECK(temporal_roughness({1, 2, 3, 4}) == 0.0);
  CHECK(temporal_roughness({0, 1, 0, 1}) == doctest::Approx((4.0 + 4.0) / 2));
  CHECK(temporal_roughness({1, 2}) == 0.0);
  const auto s = summarize({1, 2, 3, 4});
  CHECK(s.mean == 2.5);
  CHECK(s.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(summarize({7}).sd == 0.0);
}

TEST_CASE("simulated contraction: strain signs and peak frame") {
  sim::SubjectGeometry g;
  sim::SimulationConfig cfg;
  cfg.frames = 30;
  cfg.es_frame = 12;
  const auto subj = sim::simulate_sequence(g, cfg);
  const auto ctr = lv_centroid(subj.ed_myocardium, subj.ed_cavity);
  const auto sc = strain_curves(subj.sequence, ctr, subj.ed_myocardium);
  CHECK(sc.rr_pct[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(sc.cc_pct[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(sc.peak_rr_frame == 12);
  CHECK(sc.peak_cc_frame == 12);
  CHECK(sc.peak_rr_pct > 0.0);
  CHECK(sc.peak_cc_pct < 0.0);
  // ground truth fields register each mask back onto the ED mask
  const auto fm = evaluate_sequence(subj.sequence.fields, subj.masks, cfg.spacing_mm);
  for (const auto& f : fm) {
    CHECK(f.dice > 0.9);
    CHECK(f.jac_metric < 0.05);
  }
}

TEST_CASE("warp_mask and centroids") {
  const Mask m = disk(20, 9, 10, 4);
  CHECK(warp_mask(m, Tensor(Shape{2, 20, 20})) == m);
  Tensor shift(Shape{2, 20, 20});
  for (std::size_t i = 0; i < 400; ++i) shift[i] = -2.0f;
  const Mask w = warp_mask(m, shift);
  const auto c0 = centroid(m), c1 = centroid(w);
  CHECK(c1[0] - c0[0] == doctest::Approx(2.0));
  CHECK(c1[1] == doctest::Approx(c0[1]));
  const auto lv = lv_centroid(ring(40, 20, 18, 6, 9), disk(40, 20, 18, 5.9));
  CHECK(lv[0] == doctest::Approx(20.0).epsilon(1e-3));
  CHECK(lv[1] == doctest::Approx(18.0).epsilon(1e-3));
  CHECK_THROWS_AS(centroid(Mask(3, 3)), ArgumentError);
  const Mask rg = ring(40, 20, 18, 6, 9);
  const Mask hole = enclosed_region(rg);
  for (std::size_t r = 0; r < 40; ++r)
    for (std::size_t c = 0; c < 40; ++c) CHECK(hole(r, c) == (std::hypot(c - 20.0, r - 18.0) < 6));
  CHECK(enclosed_region(disk(20, 9, 10, 4)).count() == 0);
}
