#include <doctest.h>

#include <cmath>
#include <vector>

#include "bmtk/core/adam.hpp"
#include "bmtk/core/gradcheck.hpp"
#include "bmtk/core/ops.hpp"
#include "bmtk/core/rng.hpp"

using namespace bmtk;

namespace {

template <class T>
BasicTensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Triple-loop cross-correlation used as the conv2d oracle.
std::vector<double> naive_conv(const TensorD& x, const TensorD& w, const TensorD& b, int stride, int pad) {
  const int c = x.extent(1), h = x.extent(2), wd = x.extent(3);
  const int o = w.extent(0), k = w.extent(2);
  const int ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out(o * ho * wo);
  for (int oc = 0; oc < o; ++oc)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        double acc = b[oc];
        for (int ic = 0; ic < c; ++ic)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              acc += x[(ic * h + iy) * wd + ix] * w[((oc * c + ic) * k + ky) * k + kx];
            }
        out[(oc * ho + oy) * wo + ox] = acc;
      }
  return out;
}

double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

TEST_CASE("conv2d with a 1x1 identity kernel reproduces the input") {
  Rng rng(1);
  Graph g;
  const Var x = g.constant(random_tensor<float>({1, 1, 5, 6}, rng));
  const Var w = g.constant(Tensor({1, 1, 1, 1}, 1.0f));
  const Var b = g.constant(Tensor({1}));
  const Var y = ad::conv2d(g, x, w, b, 1, 0);
  CHECK(g.value(y).shape() == g.value(x).shape());
  for (std::size_t i = 0; i < g.value(x).size(); ++i) CHECK(g.value(y)[i] == g.value(x)[i]);
}

TEST_CASE("conv2d matches the naive triple loop") {
  Rng rng(2);
  GraphD g;
  const TensorD x = random_tensor<double>({1, 1, 4, 4}, rng);
  const TensorD w = random_tensor<double>({1, 1, 3, 3}, rng);
  const TensorD b = random_tensor<double>({1}, rng);
  const Var y = ad::conv2d(g, g.constant(x), g.constant(w), g.constant(b), 1, 1);
  const auto expected = naive_conv(x, w, b, 1, 1);
  REQUIRE(g.value(y).size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(g.value(y)[i] == doctest::Approx(expected[i]).epsilon(1e-12));

  GraphD g2;
  const TensorD x2 = random_tensor<double>({1, 3, 9, 7}, rng);
  const TensorD w2 = random_tensor<double>({2, 3, 3, 3}, rng);
  const TensorD b2 = random_tensor<double>({2}, rng);
  const Var y2 = ad::conv2d(g2, g2.constant(x2), g2.constant(w2), g2.constant(b2), 2, 1);
  const auto expected2 = naive_conv(x2, w2, b2, 2, 1);
  REQUIRE(g2.value(y2).size() == expected2.size());
  for (std::size_t i = 0; i < expected2.size(); ++i) CHECK(g2.value(y2)[i] == doctest::Approx(expected2[i]));
}

TEST_CASE("conv2d output extent for stride 2") {
  Graph g;
  const Var y = ad::conv2d(g, g.constant(Tensor({1, 2, 8, 8})), g.constant(Tensor({3, 2, 3, 3})),
                           g.constant(Tensor({3})), 2, 1);
  CHECK(g.value(y).shape() == Shape{1, 3, 4, 4});
}

TEST_CASE("conv2d rejects mismatched channels and even kernels") {
  Graph g;
  const Var x = g.constant(Tensor({1, 2, 8, 8}));
  CHECK_THROWS_AS(ad::conv2d(g, x, g.constant(Tensor({3, 1, 3, 3})), g.constant(Tensor({3})), 1, 1),
                  DimensionError);
  CHECK_THROWS_AS(ad::conv2d(g, x, g.constant(Tensor({3, 2, 2, 2})), g.constant(Tensor({3})), 1, 1),
                  DimensionError);
  CHECK_THROWS_AS(ad::add(g, x, g.constant(Tensor({1, 2, 8, 7}))), DimensionError);
}

namespace {

struct GruFixture {
  std::vector<TensorD> weights;  // w_r u_r b_r w_u u_u b_u w_c u_c b_c
  ad::GruVars bind(GraphD& g) const {
    std::vector<Var> v;
    for (const auto& t : weights) v.push_back(g.constant(t));
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
  }
};

GruFixture make_gru(std::size_t dh, std::size_t dx, Rng* rng) {
  GruFixture f;
  for (int gate = 0; gate < 3; ++gate) {
    for (Shape s : {Shape{dh, dx}, Shape{dh, dh}, Shape{dh}}) {
      f.weights.push_back(rng ? random_tensor<double>(s, *rng) : TensorD(s));
    }
  }
  return f;
}

}  // namespace

TEST_CASE("gru_step with zero parameters halves the state") {
  const GruFixture f = make_gru(3, 2, nullptr);
  GraphD g;
  const Var h = g.constant(TensorD({1, 3}, std::vector<double>{0.4, -1.0, 2.0}));
  const Var x = g.constant(TensorD({1, 2}, std::vector<double>{0.7, 0.1}));
  const auto& out = g.value(ad::gru_step(g, h, x, f.bind(g)));
  CHECK(out[0] == doctest::Approx(0.2));
  CHECK(out[1] == doctest::Approx(-0.5));
  CHECK(out[2] == doctest::Approx(1.0));

  GraphD g0;
  const auto& zero = g0.value(ad::gru_step(g0, g0.constant(TensorD({1, 3})), g0.constant(TensorD({1, 2})), f.bind(g0)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(zero[i] == 0.0);
}

TEST_CASE("gru_step matches a hand-unrolled scalar reference") {
  Rng rng(7);
  const GruFixture f = make_gru(3, 3, &rng);
  const TensorD h = random_tensor<double>({1, 3}, rng);
  const TensorD x = random_tensor<double>({1, 3}, rng);
  GraphD g;
  const auto& out = g.value(ad::gru_step(g, g.constant(h), g.constant(x), f.bind(g)));

  auto affine = [&](int wi, int ui, int bi, const std::vector<double>& hv, int row) {
    double acc = f.weights[bi][row];
    for (int j = 0; j < 3; ++j) acc += f.weights[wi][row * 3 + j] * x[j] + f.weights[ui][row * 3 + j] * hv[j];
    return acc;
  };
  std::vector<double> hv{h[0], h[1], h[2]}, r(3), u(3), rh(3);
  for (int i = 0; i < 3; ++i) {
    r[i] = sigm(affine(0, 1, 2, hv, i));
    u[i] = sigm(affine(3, 4, 5, hv, i));
    rh[i] = r[i] * hv[i];
  }
  for (int i = 0; i < 3; ++i) {
    const double cand = std::tanh(affine(6, 7, 8, rh, i));
    CHECK(out[i] == doctest::Approx((1 - u[i]) * hv[i] + u[i] * cand).epsilon(1e-12));
  }
}

TEST_CASE("kl_gaussian closed forms") {
  GraphD g;
  CHECK(g.value(ad::kl_gaussian(g, g.constant(TensorD({4})), g.constant(TensorD({4}))))[0] == 0.0);
  CHECK(g.value(ad::kl_gaussian(g, g.constant(TensorD({1}, 1.0)), g.constant(TensorD({1}))))[0] ==
        doctest::Approx(0.5));

  Rng rng(11);
  const Tensor mu = random_tensor<float>({32}, rng, -2, 2);
  const Tensor lv = random_tensor<float>({32}, rng, -2, 2);
  double expected = 0.0;
  for (int i = 0; i < 32; ++i) {
    const double m = mu[i], l = lv[i];
    expected += 0.5 * (m * m + std::exp(l) - 1.0 - l);
  }
  Graph gf;
  CHECK(gf.value(ad::kl_gaussian(gf, gf.constant(mu), gf.constant(lv)))[0] == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("kl_gaussian is nonnegative and zero only at the prior") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    GraphD g;
    const TensorD mu = random_tensor<double>({8}, rng, -3, 3);
    const TensorD lv = random_tensor<double>({8}, rng, -3, 3);
    CHECK(g.value(ad::kl_gaussian(g, g.constant(mu), g.constant(lv)))[0] > 0.0);
  }
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<Tensor> p{Tensor({3}, 0.5f)};
    std::vector<Tensor> gr{Tensor({3})};
    AdamState s = AdamState::zeros_like(p);
    adam_step(p, gr, s, 0.1);
    for (float v : p[0].values()) CHECK(v == 0.5f);
    CHECK(s.step == 1);
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    std::vector<Tensor> p{Tensor({2}, std::vector<float>{0.0f, 0.0f})};
    std::vector<Tensor> gr{Tensor({2}, std::vector<float>{2.5f, -0.01f})};
    AdamState s = AdamState::zeros_like(p);
    adam_step(p, gr, s, 0.1);
    CHECK(p[0][0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(p[0][1] == doctest::Approx(0.1).epsilon(1e-5));
  }
  SUBCASE("two-step scalar trace") {
    std::vector<Tensor> p{Tensor({1}, 1.0f)};
    AdamState s = AdamState::zeros_like(p);
    std::vector<Tensor> g1{Tensor({1}, 0.3f)};
    adam_step(p, g1, s, 0.1);
    CHECK(p[0][0] == doctest::Approx(0.9000000033333332).epsilon(1e-7));
    std::vector<Tensor> g2{Tensor({1}, -0.1f)};
    adam_step(p, g2, s, 0.1);
    CHECK(p[0][0] == doctest::Approx(0.8599781479280808).epsilon(1e-6));
    for (float v : s.v[0].values()) CHECK(v >= 0.0f);
  }
}

TEST_CASE("grad_check on conv2d, mse and gru_step") {
  Rng rng(21);
  const std::vector<TensorD> conv_inputs{random_tensor<double>({1, 4, 8, 8}, rng),
                                         random_tensor<double>({3, 4, 3, 3}, rng),
                                         random_tensor<double>({3}, rng)};
  const auto conv = grad_check(
      "conv2d", [](GraphD& g, std::span<const Var> v) { return ad::conv2d(g, v[0], v[1], v[2], 1, 1); },
      conv_inputs);
  CHECK(conv.max_rel_error < 1e-4);

  GraphD g;
  const TensorD x = random_tensor<double>({5}, rng);
  const Var a = g.variable(x);
  const Var b = g.constant(x);
  g.backward(ad::mse(g, a, b));
  for (double v : g.grad(a).values()) CHECK(v == 0.0);

  const GruFixture f = make_gru(3, 2, &rng);
  std::vector<TensorD> gru_inputs{random_tensor<double>({1, 3}, rng), random_tensor<double>({1, 2}, rng)};
  gru_inputs.insert(gru_inputs.end(), f.weights.begin(), f.weights.end());
  const auto gru = grad_check(
      "gru_step",
      [](GraphD& gg, std::span<const Var> v) {
        return ad::gru_step(gg, v[0], v[1], ad::GruVars{v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]});
      },
      gru_inputs);
  CHECK(gru.max_rel_error < 1e-4);
}

TEST_CASE("gradient accumulation is linear in the loss") {
  Rng rng(31);
  const TensorD x = random_tensor<double>({2, 3}, rng);
  const TensorD w = random_tensor<double>({4, 3}, rng);
  const TensorD b = random_tensor<double>({4}, rng);
  auto loss_grad = [&](int which) {
    GraphD g;
    const Var xv = g.variable(x);
    const Var y = ad::dense(g, xv, g.constant(w), g.constant(b));
    const Var l1 = ad::sum_squares(g, ad::tanh(g, y));
    const Var l2 = ad::sum(g, ad::sigmoid(g, y));
    g.backward(which == 0 ? l1 : which == 1 ? l2 : ad::add(g, l1, l2));
    return g.grad(xv);
  };
  const TensorD g1 = loss_grad(0), g2 = loss_grad(1), g12 = loss_grad(2);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(g12[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
}

TEST_CASE("forward passes are deterministic") {
  Rng rng(41);
  const Tensor x = random_tensor<float>({2, 3, 12, 12}, rng);
  const Tensor w = random_tensor<float>({4, 3, 3, 3}, rng);
  const Tensor b = random_tensor<float>({4}, rng);
  auto run = [&] {
    Graph g;
    const Var y = ad::conv2d(g, g.constant(x), g.constant(w), g.constant(b), 2, 1);
    return g.value(ad::upsample_nearest2x(g, ad::leaky_relu(g, y)));
  };
  const Tensor a = run(), c = run();
  CHECK(a.storage() == c.storage());
}

TEST_CASE("backward requires a scalar loss") {
  Graph g;
  const Var x = g.variable(Tensor({3}));
  CHECK_THROWS_AS(g.backward(ad::scale(g, x, 2.0f)), DimensionError);
}
