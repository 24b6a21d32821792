#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "bmtk/vae/checkpoint.hpp"
#include "bmtk/vae/loss.hpp"
#include "bmtk/vae/model.hpp"

namespace bmtk::vae {

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double seconds = 0.0;
};

struct TrainConfig {
  Architecture arch;  // grid is taken from the data
  LossWeights weights;
  double learning_rate = 1e-4;
  int epochs = 200;
  std::uint64_t seed = 0;
  /// Share held back for model selection when no explicit validation set is given.
  double validation_fraction = 0.2;
  int es_frame = 20;
  std::function<void(const EpochStats&)> on_epoch;
};

/// Adam on the training objective, one sequence per step, reparameterised
/// sampling z = mu + exp(logvar / 2) * eta. Validation loss is evaluated with
/// z = mu; the parameters with the lowest validation loss are returned.
/// Throws ArgumentError on an empty dataset or inconsistent sequence shapes.
VaeCheckpoint train(const std::vector<Tensor>& sequences, const TrainConfig& config);
VaeCheckpoint train(const std::vector<Tensor>& train_set, const std::vector<Tensor>& validation_set,
                    const TrainConfig& config);

/// Loss of one sequence with z = mu (no sampling).
double evaluation_loss(const TemporalVae& model, const Tensor& fields, const LossWeights& weights,
                       const std::vector<float>& omega);

/// z = mu + exp(logvar / 2) * eta, elementwise.
Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& eta);

}  // namespace bmtk::vae
