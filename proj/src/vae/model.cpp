#include "bmtk/vae/model.hpp"

#include <cmath>
#include <string>

#include "bmtk/errors.hpp"

namespace bmtk::vae {

void Architecture::validate() const {
  if (rows == 0 || cols == 0 || rows % 16 != 0 || cols % 16 != 0) {
    throw ManifestError("grid " + std::to_string(rows) + "x" + std::to_string(cols) + " must be a multiple of 16");
  }
  if (latent_dim < 1) throw ManifestError("latent dimension must be >= 1");
  if (encoder_channels.size() != 4 || decoder_channels.size() != 4) {
    throw ManifestError("encoder and decoder tables need four entries each");
  }
  for (int c : encoder_channels) {
    if (c < 1) throw ManifestError("channel widths must be positive");
  }
  for (int c : decoder_channels) {
    if (c < 1) throw ManifestError("channel widths must be positive");
  }
}

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

void add_gru(std::vector<ParamSpec>& t, const std::string& prefix, std::size_t in, std::size_t hidden) {
  for (const char* gate : {"reset", "update", "cand"}) {
    t.push_back({prefix + ".w_" + gate, {hidden, in}});
    t.push_back({prefix + ".u_" + gate, {hidden, hidden}});
    t.push_back({prefix + ".b_" + gate, {hidden}});
  }
}

ad::GruVars gru_vars(const std::vector<Var>& p, std::size_t at) {
  return {p[at], p[at + 1], p[at + 2], p[at + 3], p[at + 4], p[at + 5], p[at + 6], p[at + 7], p[at + 8]};
}

template <class T>
Var run_gru(BasicGraph<T>& g, Var seq, const ad::GruVars& gv, std::size_t hidden) {
  const std::size_t frames = g.value(seq).extent(0);
  Var h = g.constant(BasicTensor<T>(Shape{1, hidden}));
  std::vector<Var> rows;
  rows.reserve(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    h = ad::gru_step(g, h, ad::slice(g, seq, t, t + 1), gv);
    rows.push_back(h);
  }
  return ad::concat<T>(g, rows);
}

// Index bookkeeping shared by param_table and the graph builders.
struct Layout {
  std::size_t enc_conv = 0, enc_dense, enc_gru, enc_mu, enc_logvar;
  std::size_t dec_gru, dec_dense, dec_conv, dec_aux, total;
};

Layout layout(const Architecture& a) {
  Layout l;
  l.enc_dense = l.enc_conv + 8;
  l.enc_gru = l.enc_dense + 2;
  l.enc_mu = l.enc_gru + (a.recurrent ? 9 : 0);
  l.enc_logvar = l.enc_mu + 2;
  l.dec_gru = l.enc_logvar + 2;
  l.dec_dense = l.dec_gru + (a.recurrent ? 9 : 0);
  l.dec_conv = l.dec_dense + 2;
  l.dec_aux = l.dec_conv + 8;
  l.total = l.dec_aux + 4;
  return l;
}

}  // namespace

std::vector<ParamSpec> param_table(const Architecture& a) {
  a.validate();
  const std::size_t d = sz(a.latent_dim);
  const auto& ec = a.encoder_channels;
  const auto& dc = a.decoder_channels;
  const std::size_t coarse = a.coarse_rows() * a.coarse_cols();
  std::vector<ParamSpec> t;
  int in = 2;
  for (int i = 0; i < 4; ++i) {
    t.push_back({"enc.conv" + std::to_string(i) + ".w", {sz(ec[i]), sz(in), 3, 3}});
    t.push_back({"enc.conv" + std::to_string(i) + ".b", {sz(ec[i])}});
    in = ec[i];
  }
  t.push_back({"enc.dense.w", {d, sz(ec[3]) * coarse}});
  t.push_back({"enc.dense.b", {d}});
  if (a.recurrent) add_gru(t, "enc.gru", d, d);
  t.push_back({"enc.mu.w", {d, d}});
  t.push_back({"enc.mu.b", {d}});
  t.push_back({"enc.logvar.w", {d, d}});
  t.push_back({"enc.logvar.b", {d}});
  if (a.recurrent) add_gru(t, "dec.gru", d, d);
  t.push_back({"dec.dense.w", {sz(dc[0]) * coarse, d}});
  t.push_back({"dec.dense.b", {sz(dc[0]) * coarse}});
  const int outs[4] = {dc[1], dc[2], dc[3], 2};
  for (int i = 0; i < 4; ++i) {
    const int cin = i == 0 ? dc[0] : outs[i - 1];
    t.push_back({"dec.conv" + std::to_string(i) + ".w", {sz(outs[i]), sz(cin), 3, 3}});
    t.push_back({"dec.conv" + std::to_string(i) + ".b", {sz(outs[i])}});
  }
  for (int i = 0; i < 2; ++i) {
    t.push_back({"dec.aux" + std::to_string(i) + ".w", {2, sz(outs[i]), 3, 3}});
    t.push_back({"dec.aux" + std::to_string(i) + ".b", {2}});
  }
  return t;
}

std::size_t param_count(const Architecture& a) {
  std::size_t n = 0;
  for (const auto& p : param_table(a)) n += shape_size(p.shape);
  return n;
}

std::vector<Tensor> init_params(const Architecture& a, Rng& rng) {
  std::vector<Tensor> out;
  for (const auto& spec : param_table(a)) {
    Tensor t(spec.shape);
    const bool bias = spec.shape.size() == 1;
    if (!bias) {
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < spec.shape.size(); ++i) fan_in *= spec.shape[i];
      double bound = std::sqrt(6.0 / static_cast<double>(fan_in));  // He-uniform for leaky ReLU
      if (spec.name.find("gru") != std::string::npos) bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      if (spec.name.find("logvar") != std::string::npos || spec.name.find("aux") != std::string::npos ||
          spec.name == "dec.conv3.w") {
        bound *= 0.1;
      }
      for (auto& v : t.storage()) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    out.push_back(std::move(t));
  }
  return out;
}

template <class T>
EncodedVars<T> encode_graph(BasicGraph<T>& g, const Architecture& a, const std::vector<Var>& p, Var fields) {
  const Layout l = layout(a);
  if (p.size() != l.total) throw ManifestError("parameter list does not match the architecture");
  const auto& shape = g.value(fields).shape();
  if (shape.size() != 4 || shape[1] != 2 || shape[2] != a.rows || shape[3] != a.cols) {
    throw ManifestError("fields " + shape_str(shape) + " do not match the model grid " + std::to_string(a.rows) +
                        "x" + std::to_string(a.cols));
  }
  const std::size_t frames = shape[0];
  Var x = fields;
  for (int i = 0; i < 4; ++i) {
    x = ad::leaky_relu(g, ad::conv2d(g, x, p[l.enc_conv + 2 * i], p[l.enc_conv + 2 * i + 1], 2, 1));
  }
  x = ad::reshape(g, x, Shape{frames, g.value(x).size() / frames});
  Var h = ad::leaky_relu(g, ad::dense(g, x, p[l.enc_dense], p[l.enc_dense + 1]));
  if (a.recurrent) h = run_gru(g, h, gru_vars(p, l.enc_gru), sz(a.latent_dim));
  return {ad::dense(g, h, p[l.enc_mu], p[l.enc_mu + 1]), ad::dense(g, h, p[l.enc_logvar], p[l.enc_logvar + 1])};
}

template <class T>
Var decode_graph(BasicGraph<T>& g, const Architecture& a, const std::vector<Var>& p, Var z) {
  const Layout l = layout(a);
  if (p.size() != l.total) throw ManifestError("parameter list does not match the architecture");
  const auto& shape = g.value(z).shape();
  if (shape.size() != 2 || shape[1] != sz(a.latent_dim)) {
    throw ManifestError("latent matrix " + shape_str(shape) + " does not match D = " + std::to_string(a.latent_dim));
  }
  const std::size_t frames = shape[0];
  Var h = z;
  if (a.recurrent) h = run_gru(g, h, gru_vars(p, l.dec_gru), sz(a.latent_dim));
  Var x = ad::leaky_relu(g, ad::dense(g, h, p[l.dec_dense], p[l.dec_dense + 1]));
  x = ad::reshape(g, x, Shape{frames, sz(a.decoder_channels[0]), a.coarse_rows(), a.coarse_cols()});
  Var out;
  std::vector<Var> aux;
  for (int i = 0; i < 4; ++i) {
    x = ad::conv2d(g, ad::upsample_nearest2x(g, x), p[l.dec_conv + 2 * i], p[l.dec_conv + 2 * i + 1], 1, 1);
    if (i == 3) break;
    x = ad::leaky_relu(g, x);
    if (i < 2) {
      Var head = ad::conv2d(g, x, p[l.dec_aux + 2 * i], p[l.dec_aux + 2 * i + 1], 1, 1);
      aux.push_back(ad::upsample_bilinear(g, head, 1 << (3 - i)));
    }
  }
  out = x;
  for (Var v : aux) out = ad::add(g, out, v);
  return out;
}

template EncodedVars<float> encode_graph(Graph&, const Architecture&, const std::vector<Var>&, Var);
template EncodedVars<double> encode_graph(GraphD&, const Architecture&, const std::vector<Var>&, Var);
template Var decode_graph(Graph&, const Architecture&, const std::vector<Var>&, Var);
template Var decode_graph(GraphD&, const Architecture&, const std::vector<Var>&, Var);

TemporalVae::TemporalVae(Architecture arch, std::vector<Tensor> params) : arch_(std::move(arch)), params_(std::move(params)) {
  const auto table = param_table(arch_);
  if (table.size() != params_.size()) throw ManifestError("parameter tensor count does not match the architecture");
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (params_[i].shape() != table[i].shape) {
      throw ManifestError("parameter " + table[i].name + " has shape " + shape_str(params_[i].shape()) +
                          ", expected " + shape_str(table[i].shape));
    }
  }
}

TemporalVae TemporalVae::initialised(const Architecture& arch, std::uint64_t seed) {
  Rng rng(seed);
  return TemporalVae(arch, init_params(arch, rng));
}

LatentDistributionSeq TemporalVae::encode(const Tensor& fields) const {
  Graph g;
  std::vector<Var> p;
  for (const auto& t : params_) p.push_back(g.constant(t));
  const auto e = encode_graph(g, arch_, p, g.constant(fields));
  return {g.value(e.mu), g.value(e.logvar)};
}

Tensor TemporalVae::decode(const Tensor& z) const {
  Graph g;
  std::vector<Var> p;
  for (const auto& t : params_) p.push_back(g.constant(t));
  return g.value(decode_graph(g, arch_, p, g.constant(z)));
}

}  // namespace bmtk::vae
