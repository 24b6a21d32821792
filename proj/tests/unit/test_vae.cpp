#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "bmtk/core/gradcheck.hpp"
#include "bmtk/core/ops.hpp"
#include "bmtk/errors.hpp"
#include "bmtk/vae/checkpoint.hpp"
#include "bmtk/vae/loss.hpp"
#include "bmtk/vae/model.hpp"
#include "bmtk/vae/train.hpp"

using namespace bmtk;
using namespace bmtk::vae;

namespace {

Architecture tiny_arch(int d = 3, bool recurrent = true) {
  Architecture a;
  a.rows = 16;
  a.cols = 16;
  a.latent_dim = d;
  a.encoder_channels = {2, 3, 3, 2};
  a.decoder_channels = {3, 3, 2, 2};
  a.recurrent = recurrent;
  return a;
}

Tensor random_fields(std::size_t frames, std::size_t rows, std::size_t cols, Rng& rng, double amp = 1.0) {
  Tensor t(Shape{frames, 2, rows, cols});
  for (auto& v : t.storage()) v = static_cast<float>(rng.uniform(-amp, amp));
  return t;
}

// Smooth contraction-like sequence: radial field about the grid centre scaled by a phase.
Tensor toy_sequence(std::size_t frames, std::size_t n, double amp, double cx, double cy) {
  Tensor t(Shape{frames, 2, n, n});
  for (std::size_t f = 0; f < frames; ++f) {
    const double phase = std::sin(3.14159265358979 * f / (frames - 1));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        const double dx = c - cx, dy = r - cy;
        const double fall = std::exp(-(dx * dx + dy * dy) / 60.0);
        t[((f * 2 + 0) * n + r) * n + c] = static_cast<float>(-amp * phase * fall * dx / 4.0);
        t[((f * 2 + 1) * n + r) * n + c] = static_cast<float>(-amp * phase * fall * dy / 4.0);
      }
  }
  return t;
}

double gauss(double x, double m, double s) {
  return std::exp(-(x - m) * (x - m) / (2 * s * s)) / (s * std::sqrt(2 * 3.14159265358979323846));
}

}  // namespace

TEST_CASE("omega weights: normalised, positive, peaked at ES") {
  for (int T : {2, 5, 30, 50, 77}) {
    const int es = std::max(1, std::min(20, T - 1) * 2 / 3);
    const auto w = omega_weights(T, T == 50 ? 20 : es);
    double s = 0;
    for (double v : w) {
      CHECK(v > 0.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  const auto w = omega_weights(50);
  CHECK(std::max_element(w.begin(), w.end()) - w.begin() == 20);
  CHECK(w[20] / w[0] == doctest::Approx(gauss(60, 60, 10) / gauss(0, 60, 10)).epsilon(1e-9));
  CHECK(std::log(w[20] / w[0]) == doctest::Approx(18.0).epsilon(1e-9));
  // interval 3 before ES, 2 after
  CHECK(w[19] / w[20] == doctest::Approx(gauss(57, 60, 10) / gauss(60, 60, 10)).epsilon(1e-9));
  CHECK(w[21] / w[20] == doctest::Approx(gauss(62, 60, 10) / gauss(60, 60, 10)).epsilon(1e-9));
  CHECK_THROWS_AS(omega_weights(1), ArgumentError);
  const auto w2 = omega_weights(30, 12);
  CHECK(std::max_element(w2.begin(), w2.end()) - w2.begin() == 12);
}

TEST_CASE("spatial gradient properties") {
  Rng rng(4);
  SUBCASE("constant field gives zero") {
    Graph g;
    Tensor f(Shape{2, 2, 6, 7}, 3.5f);
    const auto& d = g.value(ad::spatial_gradient(g, g.constant(f)));
    CHECK(d.shape() == Shape{2, 4, 6, 7});
    for (float v : d.values()) CHECK(v == 0.0f);
  }
  SUBCASE("linear field") {
    Graph g;
    Tensor f(Shape{1, 2, 6, 7});
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 0; c < 7; ++c) f[r * 7 + c] = 0.25f * c;
    const auto& d = g.value(ad::spatial_gradient(g, g.constant(f)));
    for (std::size_t i = 0; i < 42; ++i) {
      CHECK(d[i] == doctest::Approx(0.25));      // dphi_x/dx
      CHECK(d[42 + i] == doctest::Approx(0.0));  // dphi_x/dy
      CHECK(d[84 + i] == 0.0f);
      CHECK(d[126 + i] == 0.0f);
    }
  }
  SUBCASE("translation invariance") {
    Graph g;
    Tensor f = random_fields(3, 5, 5, rng);
    Tensor shifted = f;
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t i = 0; i < 25; ++i) {
        shifted[(t * 2) * 25 + i] += 1.75f;
        shifted[(t * 2 + 1) * 25 + i] -= 0.5f;
      }
    const auto& a = g.value(ad::spatial_gradient(g, g.constant(f)));
    const auto& b = g.value(ad::spatial_gradient(g, g.constant(shifted)));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-5));
  }
}

TEST_CASE("encode and decode shapes, determinism and manifest checks") {
  const Architecture a = tiny_arch(4);
  const auto m = TemporalVae::initialised(a, 7);
  Rng rng(1);
  const Tensor f = random_fields(5, 16, 16, rng);
  const auto e1 = m.encode(f);
  const auto e2 = m.encode(f);
  CHECK(e1.mu.shape() == Shape{5, 4});
  CHECK(e1.logvar.shape() == Shape{5, 4});
  CHECK(e1.mu.storage() == e2.mu.storage());
  CHECK(e1.logvar.storage() == e2.logvar.storage());
  const Tensor d1 = m.decode(e1.mu);
  CHECK(d1.shape() == Shape{5, 2, 16, 16});
  CHECK(d1.storage() == m.decode(e1.mu).storage());
  CHECK_THROWS_AS(m.encode(random_fields(5, 32, 16, rng)), ManifestError);
  CHECK_THROWS_AS(m.decode(Tensor(Shape{5, 3})), ManifestError);
  CHECK(param_count(a) == [&] {
    std::size_t n = 0;
    for (const auto& t : m.params()) n += t.size();
    return n;
  }());
}

TEST_CASE("default architecture follows the layer table") {
  const Architecture a;
  CHECK(a.rows == 96);
  CHECK(a.latent_dim == 32);
  CHECK(a.coarse_rows() == 6);
  const auto m = TemporalVae::initialised(a, 1);
  const Tensor z(Shape{2, 32});
  CHECK(m.decode(z).shape() == Shape{2, 2, 96, 96});
  Architecture bad = a;
  bad.rows = 90;
  CHECK_THROWS_AS(bad.validate(), ManifestError);
}

TEST_CASE("encoder is causal over frames") {
  const auto m = TemporalVae::initialised(tiny_arch(4), 11);
  Rng rng(2);
  const Tensor f = random_fields(8, 16, 16, rng);
  Tensor p = f;
  const std::size_t fs = 2 * 16 * 16;
  std::swap_ranges(p.data() + 2 * fs, p.data() + 3 * fs, p.data() + 5 * fs);
  const auto a = m.encode(f), b = m.encode(p);
  const std::size_t D = 4;
  for (std::size_t i = 0; i < 2 * D; ++i) {
    CHECK(a.mu[i] == b.mu[i]);
    CHECK(a.logvar[i] == b.logvar[i]);
  }
  for (std::size_t t = 2; t < 8; ++t) {
    float diff = 0;
    for (std::size_t k = 0; k < D; ++k) diff = std::max(diff, std::abs(a.mu[t * D + k] - b.mu[t * D + k]));
    CHECK_MESSAGE(diff > 0.0f, "frame " << t);
  }
}

TEST_CASE("pairwise variant treats frames independently") {
  const auto m = TemporalVae::initialised(tiny_arch(4, false), 11);
  Rng rng(3);
  const Tensor f = random_fields(4, 16, 16, rng);
  Tensor p = f;
  const std::size_t fs = 2 * 16 * 16;
  std::swap_ranges(p.data(), p.data() + fs, p.data() + 3 * fs);
  const auto a = m.encode(f), b = m.encode(p);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(a.mu[k] == b.mu[3 * 4 + k]);
    CHECK(a.mu[4 + k] == b.mu[4 + k]);
  }
}

TEST_CASE("vae loss value cases") {
  Rng rng(5);
  const Tensor phi = random_fields(3, 4, 4, rng);
  Tensor grad_phi;
  {
    Graph g;
    grad_phi = g.value(ad::spatial_gradient(g, g.constant(phi)));
  }
  const auto omega = omega_weights(3, 1);
  Tensor zero(Shape{3, 2});
  SUBCASE("perfect reconstruction at the prior is zero") {
    CHECK(vae_loss(phi, phi, grad_phi, grad_phi, zero, zero, 10, 0.01, omega) == 0.0);
  }
  SUBCASE("beta zero leaves the weighted reconstruction term") {
    const Tensor hat = random_fields(3, 4, 4, rng);
    Graph g;
    const Tensor gh = g.value(ad::spatial_gradient(g, g.constant(hat)));
    Tensor mu(Shape{3, 2}, 0.7f), lv(Shape{3, 2}, -0.3f);
    const double a = vae_loss(phi, hat, grad_phi, gh, mu, lv, 10, 0.0, omega);
    const double b = vae_loss(phi, hat, grad_phi, gh, zero, zero, 10, 0.0, omega);
    CHECK(a == b);
    CHECK(vae_loss(phi, hat, grad_phi, gh, mu, lv, 10, 0.5, omega) > a);
  }
}

TEST_CASE("vae loss on a T=2, 2x2 hand case matches a scalar evaluation") {
  // phi[t][comp][r][c]
  const double phi[2][2][2][2] = {{{{0.1, 0.4}, {-0.2, 0.3}}, {{0.0, 0.5}, {0.6, -0.1}}},
                                  {{{1.0, -0.5}, {0.2, 0.2}}, {{0.3, 0.3}, {-0.4, 0.9}}}};
  const double hat[2][2][2][2] = {{{{0.0, 0.5}, {-0.1, 0.1}}, {{0.2, 0.4}, {0.5, 0.0}}},
                                  {{{0.8, -0.3}, {0.1, 0.5}}, {{0.1, 0.2}, {-0.6, 1.0}}}};
  const double mu[2][2] = {{0.3, -0.2}, {0.5, 0.1}};
  const double lv[2][2] = {{-0.4, 0.2}, {0.1, -1.0}};
  const double alpha = 10, beta = 0.01;
  const std::vector<double> om = {0.25, 0.75};

  double expect = 0;
  for (int t = 0; t < 2; ++t) {
    double rec = 0, grd = 0;
    for (int k = 0; k < 2; ++k)
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
          rec += std::pow(phi[t][k][r][c] - hat[t][k][r][c], 2);
          // 2x2 grid: every pixel's forward difference is the single interior one
          const double dx = (phi[t][k][r][1] - phi[t][k][r][0]) - (hat[t][k][r][1] - hat[t][k][r][0]);
          const double dy = (phi[t][k][1][c] - phi[t][k][0][c]) - (hat[t][k][1][c] - hat[t][k][0][c]);
          grd += dx * dx + dy * dy;
        }
    expect += om[t] * (rec / 8.0 + alpha * grd / 16.0);
  }
  double kl = 0;
  for (int t = 0; t < 2; ++t)
    for (int k = 0; k < 2; ++k) kl += 0.5 * (mu[t][k] * mu[t][k] + std::exp(lv[t][k]) - 1 - lv[t][k]);
  expect += beta / 2.0 * kl;

  TensorD P(Shape{2, 2, 2, 2}), H(Shape{2, 2, 2, 2}), M(Shape{2, 2}), L(Shape{2, 2});
  std::memcpy(P.data(), phi, sizeof phi);
  std::memcpy(H.data(), hat, sizeof hat);
  std::memcpy(M.data(), mu, sizeof mu);
  std::memcpy(L.data(), lv, sizeof lv);
  GraphD g;
  const auto lvars = vae_loss_graph<double>(g, g.constant(P), g.constant(H), g.constant(M), g.constant(L),
                                            LossWeights{alpha, beta}, om);
  CHECK(g.value(lvars.total)[0] == doctest::Approx(expect).epsilon(1e-12));

  // float value-only path
  Graph gf;
  const Tensor Pf = P.cast<float>(), Hf = H.cast<float>();
  const Tensor gp = gf.value(ad::spatial_gradient(gf, gf.constant(Pf)));
  const Tensor gh = gf.value(ad::spatial_gradient(gf, gf.constant(Hf)));
  CHECK(vae_loss(Pf, Hf, gp, gh, M.cast<float>(), L.cast<float>(), alpha, beta, om) ==
        doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("loss gradient with respect to every parameter passes a finite-difference check") {
  for (bool recurrent : {true, false}) {
    const Architecture a = tiny_arch(3, recurrent);
    Rng rng(21);
    const auto params = init_params(a, rng);
    std::vector<TensorD> inputs;
    for (const auto& p : params) {
      TensorD d = p.cast<double>();
      // lift the damped heads so their gradients are not all tiny
      for (auto& v : d.storage()) v += 0.05 * rng.uniform(-1, 1);
      inputs.push_back(std::move(d));
    }
    const std::size_t np = inputs.size();
    inputs.push_back(random_fields(3, 16, 16, rng, 0.8).cast<double>());
    TensorD eta(Shape{3, 3});
    for (auto& v : eta.storage()) v = rng.normal();
    inputs.push_back(eta);
    const auto omega = omega_weights(3, 1);
    const auto op = [&](GraphD& g, std::span<const Var> in) {
      std::vector<Var> p(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(np));
      const Var phi = in[np];
      const auto enc = encode_graph<double>(g, a, p, phi);
      const Var z = ad::add(g, enc.mu, ad::mul(g, ad::exp(g, ad::scale(g, enc.logvar, 0.5)), in[np + 1]));
      const Var hat = decode_graph<double>(g, a, p, z);
      return vae_loss_graph<double>(g, phi, hat, enc.mu, enc.logvar, LossWeights{10, 0.01}, omega).total;
    };
    const auto r = grad_check("vae_loss", op, inputs, 1e-6, 3);
    CHECK_MESSAGE(r.max_rel_error < 1e-4, "recurrent=" << recurrent << " input " << r.worst_input << " index "
                                                       << r.worst_index << " err " << r.max_rel_error);
  }
}

TEST_CASE("reparameterisation collapses to the mean as sigma vanishes") {
  Tensor mu(Shape{2, 3}), lv(Shape{2, 3}, -std::numeric_limits<float>::infinity()), eta(Shape{2, 3});
  Rng rng(8);
  for (auto& v : mu.storage()) v = static_cast<float>(rng.normal());
  for (auto& v : eta.storage()) v = static_cast<float>(rng.normal());
  const Tensor z = reparameterize(mu, lv, eta);
  CHECK(z.storage() == mu.storage());
  const Tensor z2 = reparameterize(mu, Tensor(Shape{2, 3}, -200.0f), eta);
  CHECK(z2.storage() == mu.storage());
  const Tensor z3 = reparameterize(mu, Tensor(Shape{2, 3}, 0.0f), eta);
  for (std::size_t i = 0; i < 6; ++i) CHECK(z3[i] == doctest::Approx(mu[i] + eta[i]));
}

TEST_CASE("training smoke run, determinism and checkpoint round trip") {
  Architecture a;
  a.latent_dim = 4;
  a.encoder_channels = {4, 4, 8, 8};
  a.decoder_channels = {8, 8, 4, 4};
  std::vector<Tensor> data;
  Rng rng(30);
  for (int i = 0; i < 20; ++i) data.push_back(toy_sequence(6, 32, rng.uniform(1.0, 3.0), rng.uniform(12, 20), rng.uniform(12, 20)));
  TrainConfig cfg;
  cfg.arch = a;
  cfg.epochs = 10;
  cfg.learning_rate = 1e-3;
  cfg.es_frame = 3;
  cfg.seed = 99;
  std::vector<double> losses;
  cfg.on_epoch = [&](const EpochStats& s) { losses.push_back(s.train_loss); };
  const VaeCheckpoint c1 = train(data, cfg);
  REQUIRE(losses.size() == 10);
  CHECK(losses.back() < losses.front());
  CHECK(c1.arch.rows == 32);
  CHECK(c1.training.at("train_sequences") == 16);
  CHECK(c1.training.at("validation_sequences") == 4);

  cfg.on_epoch = nullptr;
  const VaeCheckpoint c2 = train(data, cfg);
  const auto b1 = serialize_checkpoint(c1), b2 = serialize_checkpoint(c2);
  CHECK(b1 == b2);

  const auto path = std::filesystem::temp_directory_path() / "bmtk_test_ckpt.bin";
  save_checkpoint(path, c1);
  const VaeCheckpoint back = load_checkpoint(path);
  CHECK(back.arch == c1.arch);
  CHECK(back.seed == c1.seed);
  REQUIRE(back.params.size() == c1.params.size());
  for (std::size_t i = 0; i < back.params.size(); ++i) {
    CHECK(std::memcmp(back.params[i].data(), c1.params[i].data(), c1.params[i].size() * sizeof(float)) == 0);
  }
  CHECK(back.training == c1.training);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(train(std::vector<Tensor>{}, cfg), ArgumentError);
}

TEST_CASE("corrupt checkpoints raise format errors") {
  const Architecture a = tiny_arch(3);
  VaeCheckpoint c;
  c.arch = a;
  Rng rng(1);
  c.params = init_params(a, rng);
  const auto bytes = serialize_checkpoint(c);
  CHECK_NOTHROW(deserialize_checkpoint(bytes));

  SUBCASE("truncated") {
    CHECK_THROWS_AS(deserialize_checkpoint({}), FormatError);
    for (std::size_t keep : {std::size_t{5}, std::size_t{11}, bytes.size() / 2, bytes.size() - 1}) {
      std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
      CHECK_THROWS_AS(deserialize_checkpoint(cut), FormatError);
    }
  }
  SUBCASE("bad magic") {
    auto b = bytes;
    b[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(b), FormatError);
  }
  SUBCASE("trailing bytes") {
    auto b = bytes;
    b.push_back(0);
    CHECK_THROWS_AS(deserialize_checkpoint(b), FormatError);
  }
  SUBCASE("latent dimension edited") {
    std::uint32_t len;
    std::memcpy(&len, bytes.data() + 8, 4);
    auto j = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
    j["architecture"]["latent_dim"] = 5;
    const std::string s = j.dump();
    std::vector<std::uint8_t> b(bytes.begin(), bytes.begin() + 8);
    const auto n = static_cast<std::uint32_t>(s.size());
    for (int k = 0; k < 4; ++k) b.push_back(static_cast<std::uint8_t>(n >> (8 * k)));
    b.insert(b.end(), s.begin(), s.end());
    b.insert(b.end(), bytes.begin() + 12 + len, bytes.end());
    try {
      deserialize_checkpoint(b);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(!e.field().empty());
    }
  }
}
