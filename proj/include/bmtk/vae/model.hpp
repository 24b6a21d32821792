#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bmtk/core/graph.hpp"
#include "bmtk/core/ops.hpp"
#include "bmtk/core/rng.hpp"
#include "bmtk/core/tensor.hpp"

namespace bmtk::vae {

/// Layer table of the temporal VAE. Encoder: four stride-2 3x3 convolutions,
/// dense to D, GRU over frames, dense mu / logvar heads. Decoder: GRU over
/// frames, dense to C0 x (M/16) x (N/16), four nearest-2x upsample + 3x3 conv
/// stages, with 2-channel heads after the first two stages upsampled
/// bilinearly and added to the full-resolution output.
struct Architecture {
  std::size_t rows = 96;
  std::size_t cols = 96;
  int latent_dim = 32;
  std::vector<int> encoder_channels{16, 32, 64, 64};
  /// Decoder input width followed by the outputs of the first three stages; the last stage outputs 2.
  std::vector<int> decoder_channels{64, 64, 32, 16};
  /// false gives the pairwise variant: both GRUs are dropped, frames are independent.
  bool recurrent = true;

  /// Throws ManifestError when the table is unusable.
  void validate() const;
  std::size_t coarse_rows() const { return rows / 16; }
  std::size_t coarse_cols() const { return cols / 16; }
  bool operator==(const Architecture&) const = default;
};

struct ParamSpec {
  std::string name;
  Shape shape;
};

/// Parameter names and shapes in storage order.
std::vector<ParamSpec> param_table(const Architecture& arch);
std::size_t param_count(const Architecture& arch);
/// Scaled uniform initialisation; biases zero; output heads damped so an untrained decoder is near zero.
std::vector<Tensor> init_params(const Architecture& arch, Rng& rng);

template <class T>
struct EncodedVars {
  Var mu;      // T x D
  Var logvar;  // T x D
};

/// Graph builders. `params` follow param_table order and may be constants or variables.
template <class T>
EncodedVars<T> encode_graph(BasicGraph<T>& g, const Architecture& arch, const std::vector<Var>& params, Var fields);
template <class T>
Var decode_graph(BasicGraph<T>& g, const Architecture& arch, const std::vector<Var>& params, Var z);

/// Latent per-frame Gaussians, frame-major: row t holds frame t.
struct LatentDistributionSeq {
  Tensor mu;      // T x D
  Tensor logvar;  // T x D
};

/// A trained (or freshly initialised) model held by value.
class TemporalVae {
 public:
  TemporalVae(Architecture arch, std::vector<Tensor> params);
  static TemporalVae initialised(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::vector<Tensor>& mutable_params() { return params_; }

  /// fields: T x 2 x M x N. Throws ManifestError on a grid mismatch.
  LatentDistributionSeq encode(const Tensor& fields) const;
  /// z: T x D. Throws ManifestError when D differs from the manifest.
  Tensor decode(const Tensor& z) const;

 private:
  Architecture arch_;
  std::vector<Tensor> params_;
};

}  // namespace bmtk::vae
