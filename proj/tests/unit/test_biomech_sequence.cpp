#include <doctest.h>

#include <cmath>

#include "bmtk/core/grid.hpp"
#include "bmtk/errors.hpp"
#include "bmtk/sim/cine.hpp"
#include "bmtk/sim/simulate.hpp"

using namespace bmtk;
using namespace bmtk::sim;

namespace {

const SimulatedSubject& subject() {
  static const SimulatedSubject s = [] {
    SubjectGeometry g;
    g.es_shift_px = Vec2(1.0, -0.5);
    g.ed_center_px = Vec2(47.0, 49.5);
    return simulate_sequence(g, SimulationConfig{});
  }();
  return s;
}

// Mean | |det(I + grad phi)| - 1 | over mask pixels whose 4-neighbours are all in the mask.
double mean_jacobian_deviation(const float* phi, const Mask& m) {
  const std::size_t R = m.rows, C = m.cols, P = R * C;
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 1; r + 1 < R; ++r) {
    for (std::size_t c = 1; c + 1 < C; ++c) {
      if (!m(r, c) || !m(r - 1, c) || !m(r + 1, c) || !m(r, c - 1) || !m(r, c + 1)) continue;
      auto at = [&](int ch, std::size_t rr, std::size_t cc) { return static_cast<double>(phi[ch * P + rr * C + cc]); };
      const double uxx = 0.5 * (at(0, r, c + 1) - at(0, r, c - 1)), uxy = 0.5 * (at(0, r + 1, c) - at(0, r - 1, c));
      const double uyx = 0.5 * (at(1, r, c + 1) - at(1, r, c - 1)), uyy = 0.5 * (at(1, r + 1, c) - at(1, r - 1, c));
      acc += std::abs(std::abs((1 + uxx) * (1 + uyy) - uxy * uyx) - 1.0);
      ++n;
    }
  }
  return n ? acc / n : 0.0;
}

}  // namespace

TEST_CASE("cycle phase is zero at ED, one at ES and returns to zero") {
  const auto w = cycle_phase(50, 0, 20);
  REQUIRE(w.size() == 50);
  CHECK(w[0] == 0.0);
  CHECK(w[20] == doctest::Approx(1.0));
  CHECK(w[49] == doctest::Approx(0.0).epsilon(1e-12));
  for (int t = 1; t <= 20; ++t) CHECK(w[t] > w[t - 1]);
  for (int t = 21; t < 50; ++t) CHECK(w[t] < w[t - 1]);
  const auto a = area_trajectory(100.0, 80.0, 50, 0, 20);
  CHECK(a[0] == 100.0);
  CHECK(a[20] == doctest::Approx(80.0));
}

TEST_CASE("simulated sequence is ED-referenced with the right shape") {
  const SimulatedSubject& s = subject();
  CHECK(s.sequence.fields.shape() == Shape{50, 2, 96, 96});
  CHECK(s.masks.shape() == Shape{50, 96, 96});
  for (std::size_t i = 0; i < 2 * 96 * 96; ++i) REQUIRE(s.sequence.fields[i] == 0.0f);
  CHECK(s.sequence.fields.all_finite());
  const PressureSchedule& p = s.schedule;
  REQUIRE(p.pressure_kpa.size() == 50);
  CHECK(p.pressure_kpa[20] == 0.0);
  CHECK(p.pressure_kpa[0] > 1.0);
  for (std::size_t t = 0; t < 50; ++t) {
    CHECK(std::abs(p.achieved_area_px2[t] - p.target_area_px2[t]) / p.target_area_px2[t] < 0.005);
  }
  // the cavity shrinks between ED and ES
  Mask es_mask = Mask::from_tensor(Tensor(Shape{96, 96}, std::vector<float>(s.masks.data() + 20 * 96 * 96,
                                                                              s.masks.data() + 21 * 96 * 96)));
  CHECK(std::abs(static_cast<double>(es_mask.count()) - s.ed_myocardium.count()) < 0.05 * s.ed_myocardium.count());
}

TEST_CASE("fields are zero outside the dilated ED myocardium") {
  const SimulatedSubject& s = subject();
  const Mask support = dilate_disk(s.ed_myocardium, 3);
  const std::size_t P = 96 * 96;
  for (std::size_t t = 0; t < 50; ++t) {
    for (std::size_t i = 0; i < P; ++i) {
      if (support.bits[i]) continue;
      REQUIRE(s.sequence.fields[t * 2 * P + i] == 0.0f);
      REQUIRE(s.sequence.fields[t * 2 * P + P + i] == 0.0f);
    }
  }
}

TEST_CASE("simulated frames stay near-incompressible in the myocardium") {
  const SimulatedSubject& s = subject();
  double worst = 0.0;
  for (std::size_t t = 0; t < 50; ++t) {
    worst = std::max(worst, mean_jacobian_deviation(s.sequence.fields.data() + t * 2 * 96 * 96, s.ed_myocardium));
  }
  CHECK(worst < 0.05);
}

TEST_CASE("ED image has the requested intensity layout") {
  const SimulatedSubject& s = subject();
  Rng rng(11);
  const Tensor img = make_ed_image(s.ed_myocardium, s.ed_cavity, rng);
  CHECK(img.shape() == Shape{96, 96});
  for (float v : img.values()) CHECK((v >= 0.0f && v <= 1.0f));
  CHECK(img[0] == doctest::Approx(0.15f));
  CHECK(img[48 * 96 + 48] == doctest::Approx(0.85f).epsilon(1e-3));
}

TEST_CASE("zero fields reproduce the ED image in every frame") {
  Rng rng(2);
  Tensor ed(Shape{16, 20});
  for (auto& v : ed.storage()) v = static_cast<float>(rng.uniform());
  const Tensor frames = synthesize_cine(ed, Tensor(Shape{4, 2, 16, 20}));
  CHECK(frames.shape() == Shape{4, 16, 20});
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t i = 0; i < ed.size(); ++i) CHECK(frames[t * ed.size() + i] == ed[i]);
  }
  CHECK_THROWS_AS(synthesize_cine(ed, Tensor(Shape{4, 2, 16, 19})), DimensionError);
}

TEST_CASE("warping synthesized frames back with the true fields recovers the ED image") {
  const SimulatedSubject& s = subject();
  Rng rng(5);
  const Tensor ed = make_ed_image(s.ed_myocardium, s.ed_cavity, rng);
  const Tensor cine = synthesize_cine(ed, s.sequence.fields);
  for (float v : cine.values()) REQUIRE((v >= 0.0f && v <= 1.0f));
  const Mask m = dilate_disk(s.ed_myocardium, 3);
  const std::size_t P = 96 * 96;
  double with_truth = 0.0, with_zero = 0.0;
  for (std::size_t t = 0; t < 50; ++t) {
    const float* frame = cine.data() + t * P;
    const float* phi = s.sequence.fields.data() + t * 2 * P;
    for (std::size_t r = 0; r < 96; ++r) {
      for (std::size_t c = 0; c < 96; ++c) {
        const std::size_t i = r * 96 + c;
        if (!m.bits[i]) continue;
        const double w = sample_bilinear(frame, 96, 96, c + phi[i], r + phi[P + i]);
        with_truth += (ed[i] - w) * (ed[i] - w);
        with_zero += (ed[i] - frame[i]) * (ed[i] - frame[i]);
      }
    }
  }
  with_truth /= 50;
  with_zero /= 50;
  MESSAGE("dissimilarity truth " << with_truth << " zero-field " << with_zero);
  CHECK(with_truth < 0.1 * with_zero);
}
