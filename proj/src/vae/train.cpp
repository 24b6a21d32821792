#include "bmtk/vae/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "bmtk/core/adam.hpp"
#include "bmtk/core/ops.hpp"
#include "bmtk/errors.hpp"

namespace bmtk::vae {

namespace {

void check_dataset(const std::vector<Tensor>& data, const char* what, Shape& shape) {
  for (const auto& s : data) {
    if (s.rank() != 4 || s.extent(1) != 2) {
      throw ArgumentError(std::string(what) + " sequence has shape " + shape_str(s.shape()) + ", expected T x 2 x M x N");
    }
    if (shape.empty()) shape = s.shape();
    if (s.shape() != shape) throw ArgumentError(std::string(what) + " sequences do not share one shape");
    if (!s.all_finite()) throw ArgumentError(std::string(what) + " sequence contains non-finite values");
  }
}

std::vector<float> omega_f(int frames, int es) {
  const auto w = omega_weights(frames, es);
  return {w.begin(), w.end()};
}

nlohmann::json config_echo(const TrainConfig& c) {
  return {{"alpha", c.weights.alpha},
          {"beta", c.weights.beta},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"validation_fraction", c.validation_fraction},
          {"es_frame", c.es_frame},
          {"batch_sequences", 1}};
}

}  // namespace

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& eta) {
  if (mu.shape() != logvar.shape() || mu.shape() != eta.shape()) throw DimensionError("reparameterize: shape mismatch");
  Tensor z(mu.shape());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu[i] + std::exp(0.5f * logvar[i]) * eta[i];
  return z;
}

double evaluation_loss(const TemporalVae& model, const Tensor& fields, const LossWeights& weights,
                       const std::vector<float>& omega) {
  Graph g;
  std::vector<Var> p;
  for (const auto& t : model.params()) p.push_back(g.constant(t));
  const Var phi = g.constant(fields);
  const auto enc = encode_graph(g, model.architecture(), p, phi);
  const Var phi_hat = decode_graph(g, model.architecture(), p, enc.mu);
  return g.value(vae_loss_graph(g, phi, phi_hat, enc.mu, enc.logvar, weights, omega).total)[0];
}

VaeCheckpoint train(const std::vector<Tensor>& sequences, const TrainConfig& config) {
  if (sequences.empty()) throw ArgumentError("training needs at least one sequence");
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(config.seed ^ 0x5bd1e995u);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split_rng.next_u64() % i]);
  std::size_t n_val = 0;
  if (sequences.size() >= 2) {
    n_val = static_cast<std::size_t>(std::lround(config.validation_fraction * sequences.size()));
    n_val = std::clamp<std::size_t>(n_val, 1, sequences.size() - 1);
  }
  std::vector<Tensor> tr, va;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? va : tr).push_back(sequences[order[i]]);
  return train(tr, va, config);
}

VaeCheckpoint train(const std::vector<Tensor>& train_set, const std::vector<Tensor>& validation_set,
                    const TrainConfig& config) {
  if (train_set.empty()) throw ArgumentError("training needs at least one sequence");
  if (config.epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (!(config.learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
  Shape shape;
  check_dataset(train_set, "training", shape);
  check_dataset(validation_set, "validation", shape);
  const int frames = static_cast<int>(shape[0]);
  Architecture arch = config.arch;
  arch.rows = shape[2];
  arch.cols = shape[3];
  arch.validate();
  const auto omega = omega_f(frames, config.es_frame);
  const std::vector<Tensor>& val = validation_set.empty() ? train_set : validation_set;

  Rng init_rng(config.seed);
  std::vector<Tensor> params = init_params(arch, init_rng);
  AdamState adam = AdamState::zeros_like(params);
  Rng noise(config.seed + 0x9e3779b97f4a7c15ull);
  Rng shuffle(config.seed + 0x2545f4914f6cdd1dull);

  std::vector<Tensor> best = params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  nlohmann::json history = nlohmann::json::array();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t D = static_cast<std::size_t>(arch.latent_dim);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.next_u64() % i]);
    double train_loss = 0.0;
    for (std::size_t idx : order) {
      Graph g;
      std::vector<Var> p;
      p.reserve(params.size());
      for (const auto& t : params) p.push_back(g.variable(t));
      const Var phi = g.constant(train_set[idx]);
      const auto enc = encode_graph(g, arch, p, phi);
      Tensor eta(Shape{static_cast<std::size_t>(frames), D});
      for (auto& v : eta.storage()) v = static_cast<float>(noise.normal());
      const Var sd = ad::exp(g, ad::scale(g, enc.logvar, 0.5f));
      const Var z = ad::add(g, enc.mu, ad::mul(g, sd, g.constant(eta)));
      const Var phi_hat = decode_graph(g, arch, p, z);
      const auto loss = vae_loss_graph(g, phi, phi_hat, enc.mu, enc.logvar, config.weights, omega);
      const double value = g.value(loss.total)[0];
      if (!std::isfinite(value)) throw NumericalError("training loss became non-finite at epoch " + std::to_string(epoch));
      train_loss += value;
      g.backward(loss.total);
      std::vector<Tensor> grads;
      grads.reserve(p.size());
      for (Var v : p) grads.push_back(g.grad(v));
      adam_step(params, grads, adam, config.learning_rate);
    }
    train_loss /= static_cast<double>(order.size());
    const TemporalVae current(arch, params);
    double val_loss = 0.0;
    for (const auto& s : val) val_loss += evaluation_loss(current, s, config.weights, omega);
    val_loss /= static_cast<double>(val.size());
    if (!std::isfinite(val_loss)) throw NumericalError("validation loss became non-finite at epoch " + std::to_string(epoch));
    if (val_loss < best_val) {
      best_val = val_loss;
      best = params;
      best_epoch = epoch;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.push_back({{"epoch", epoch}, {"train_loss", train_loss}, {"validation_loss", val_loss}});
    if (config.on_epoch) config.on_epoch(EpochStats{epoch, train_loss, val_loss, secs});
  }

  VaeCheckpoint ck;
  ck.arch = arch;
  ck.params = std::move(best);
  ck.seed = config.seed;
  ck.training = config_echo(config);
  ck.training["train_sequences"] = train_set.size();
  ck.training["validation_sequences"] = validation_set.size();
  ck.training["best_epoch"] = best_epoch;
  ck.training["best_validation_loss"] = best_val;
  ck.training["history"] = history;
  return ck;
}

}  // namespace bmtk::vae
