#include "bmtk/reg/registration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "bmtk/core/adam.hpp"
#include "bmtk/core/ops.hpp"
#include "bmtk/core/rng.hpp"
#include "bmtk/errors.hpp"

namespace bmtk::reg {

namespace {

void check_images(const Tensor& images, const Mask& mask) {
  if (images.rank() != 3) throw DimensionError("images must be T x M x N, got " + shape_str(images.shape()));
  if (images.extent(0) < 2) throw ArgumentError("registration needs at least 2 frames");
  if (mask.rows != images.extent(1) || mask.cols != images.extent(2)) {
    throw DimensionError("mask grid does not match the images");
  }
}

void check_model_grid(const vae::Architecture& a, const Tensor& images) {
  if (images.extent(1) != a.rows || images.extent(2) != a.cols) {
    throw ManifestError("images " + shape_str(images.shape()) + " do not match the model grid " +
                        std::to_string(a.rows) + "x" + std::to_string(a.cols));
  }
}

// mask repeated over frames
Tensor frame_mask(const Mask& m, std::size_t frames) {
  Tensor t(Shape{frames, m.rows, m.cols});
  const std::size_t n = m.rows * m.cols;
  for (std::size_t f = 0; f < frames; ++f)
    for (std::size_t i = 0; i < n; ++i) t[f * n + i] = m.bits[i] ? 1.0f : 0.0f;
  return t;
}

Tensor reference_stack(const Tensor& images) {
  Tensor ref(images.shape());
  const std::size_t n = images.extent(1) * images.extent(2);
  for (std::size_t f = 0; f < images.extent(0); ++f) std::copy(images.data(), images.data() + n, ref.data() + f * n);
  return ref;
}

double data_scale(const Mask& m, std::size_t frames, bool normalize) {
  double s = 1.0 / static_cast<double>(frames);
  if (normalize) s /= static_cast<double>(std::max<std::size_t>(1, m.count()));
  return s;
}

}  // namespace

void RegistrationConfig::validate() const {
  if (!(mu >= 0.0)) throw ArgumentError("mu must be >= 0");
  if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be > 0");
  if (!(init_variance > 0.0)) throw ArgumentError("init variance must be > 0");
  if (!(tolerance >= 0.0)) throw ArgumentError("tolerance must be >= 0");
  if (patience < 1) throw ArgumentError("patience must be >= 1");
  if (min_iterations < 0) throw ArgumentError("min iterations must be >= 0");
  if (max_iterations < 1) throw ArgumentError("max iterations must be >= 1");
  if (dilation_radius < 0) throw ArgumentError("dilation radius must be >= 0");
}

Mask dilate_mask(const Mask& mask, int radius) {
  if (radius < 0) throw ArgumentError("dilation radius must be >= 0");
  return dilate_disk(mask, radius);
}

Tensor warp_image(const Tensor& image, const Tensor& field) {
  if (image.rank() != 2) throw DimensionError("warp_image: image must be M x N");
  const Tensor out = warp_sequence(image.reshaped(Shape{1, image.extent(0), image.extent(1)}),
                                   field.reshaped(Shape{1, 2, image.extent(0), image.extent(1)}));
  return out.reshaped(image.shape());
}

Tensor warp_sequence(const Tensor& images, const Tensor& fields) {
  Graph g;
  return g.value(ad::warp(g, g.constant(images), g.constant(fields)));
}

ObjectiveTerms lse_objective_fields(const Tensor& fields, const Tensor& z, const Tensor& images, const Mask& mask,
                                    double mu, bool normalize_by_mask) {
  check_images(images, mask);
  const std::size_t T = images.extent(0);
  const Tensor warped = warp_sequence(images, fields);
  const std::size_t n = mask.rows * mask.cols;
  double sse = 0.0;
  for (std::size_t f = 0; f < T; ++f)
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask.bits[i]) continue;
      const double d = static_cast<double>(images[i]) - warped[f * n + i];
      sse += d * d;
    }
  double zz = 0.0;
  for (float v : z.values()) zz += static_cast<double>(v) * v;
  ObjectiveTerms o;
  o.data = sse * data_scale(mask, T, normalize_by_mask);
  o.penalty = mu * zz;
  o.total = o.data + o.penalty;
  return o;
}

ObjectiveTerms lse_objective(const vae::TemporalVae& model, const Tensor& z, const Tensor& images, const Mask& mask,
                             double mu, bool normalize_by_mask) {
  check_images(images, mask);
  check_model_grid(model.architecture(), images);
  if (z.rank() != 2 || z.extent(0) != images.extent(0)) {
    throw DimensionError("latent matrix " + shape_str(z.shape()) + " does not cover " +
                         std::to_string(images.extent(0)) + " frames");
  }
  return lse_objective_fields(model.decode(z), z, images, mask, mu, normalize_by_mask);
}

Tensor init_latent(int latent_dim, int frames, std::uint64_t seed, double variance) {
  if (!(variance > 0.0)) throw ArgumentError("latent init variance must be > 0");
  if (latent_dim < 1 || frames < 1) throw ArgumentError("latent matrix needs positive dimensions");
  Rng rng(seed);
  const double sd = std::sqrt(variance);
  Tensor z(Shape{static_cast<std::size_t>(frames), static_cast<std::size_t>(latent_dim)});
  for (auto& v : z.storage()) v = static_cast<float>(sd * rng.normal());
  return z;
}

TrackingResult register_sequence(const Tensor& images, const Mask& ed_myocardium, const vae::TemporalVae& model,
                                 const RegistrationConfig& config) {
  config.validate();
  check_images(images, ed_myocardium);
  const auto& arch = model.architecture();
  check_model_grid(arch, images);
  for (float v : images.values()) {
    if (!std::isfinite(v) || v < -1e-6f || v > 1.0f + 1e-6f) throw ArgumentError("images must be normalised to [0, 1]");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t T = images.extent(0);
  const Mask roi = dilate_mask(ed_myocardium, config.dilation_radius);
  const Tensor mask = frame_mask(roi, T);
  const Tensor ref = reference_stack(images);
  const float scale = static_cast<float>(data_scale(roi, T, config.normalize_by_mask));
  const float mu = static_cast<float>(config.mu);

  std::vector<Tensor> z{init_latent(arch.latent_dim, static_cast<int>(T), config.seed, config.init_variance)};
  AdamState adam = AdamState::zeros_like(z);

  TrackingResult res;
  Tensor best_z = z[0];
  double best = std::numeric_limits<double>::infinity();
  int stall = 0;
  for (int it = 0; it < config.max_iterations; ++it) {
    Graph g;
    std::vector<Var> p;
    p.reserve(model.params().size());
    for (const auto& t : model.params()) p.push_back(g.constant(t));
    const Var zv = g.variable(z[0]);
    const Var phi = vae::decode_graph(g, arch, p, zv);
    const Var warped = ad::warp(g, g.constant(images), phi);
    const Var data = ad::scale(g, ad::masked_sse(g, warped, g.constant(ref), mask), scale);
    const Var pen = ad::scale(g, ad::sum_squares(g, zv), mu);
    const Var loss = ad::add(g, data, pen);
    const double value = g.value(loss)[0];
    if (!std::isfinite(value)) {
      throw OptimizationError("latent objective became non-finite at iteration " + std::to_string(it), it);
    }
    res.trace.push_back(value);
    res.data_trace.push_back(g.value(data)[0]);
    const double prev_best = best;
    if (value < best) {
      best = value;
      best_z = z[0];
      res.best_iteration = it;
    }
    res.best_trace.push_back(best);
    if (it > 0) {
      stall = (prev_best - best <= config.tolerance) ? stall + 1 : 0;
      if (stall >= config.patience && it >= config.min_iterations) {
        res.converged = true;
        break;
      }
    }
    if (it + 1 == config.max_iterations) break;
    g.backward(loss);
    const std::vector<Tensor> grads{g.grad(zv)};
    adam_step(z, grads, adam, config.learning_rate);
  }
  res.iterations = static_cast<int>(res.trace.size());
  res.z = best_z;
  res.fields.fields = model.decode(best_z);
  res.fields.spacing_mm = config.spacing_mm;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace bmtk::reg
