#include "bmtk/app/pipeline.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "bmtk/errors.hpp"
#include "bmtk/io/container.hpp"

namespace bmtk::app {

namespace {

using nlohmann::json;

// Strict view of one JSON object: typed lookups, unknown keys rejected by finish().
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ArgumentError("config " + where_ + ": expected a JSON object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ArgumentError("config " + where_ + "." + key + ": " + e.what());
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  Fields sub(const std::string& key) {
    seen_.insert(key);
    return Fields(j_.at(key), where_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ArgumentError("config " + where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

CohortConfig cohort_from_json(const json& j) {
  CohortConfig c;
  Fields f(j, "simulate");
  f.get("seed", c.seed);
  f.get("subjects", c.subjects);
  f.get("rows", c.sim.rows);
  f.get("cols", c.sim.cols);
  f.get("spacing_mm", c.sim.spacing_mm);
  f.get("frames", c.sim.frames);
  f.get("ed_frame", c.sim.ed_frame);
  f.get("es_frame", c.sim.es_frame);
  f.get("target_elements", c.sim.target_elements);
  f.get("band_radius", c.sim.band_radius);
  if (f.has("material")) {
    Fields m = f.sub("material");
    m.get("youngs_kpa", c.sim.material.youngs_kpa);
    m.get("poisson", c.sim.material.poisson);
    m.finish();
  }
  if (f.has("ranges")) {
    Fields r = f.sub("ranges");
    r.get("inner_min_px", c.ranges.inner_min_px);
    r.get("inner_max_px", c.ranges.inner_max_px);
    r.get("thickness_min_px", c.ranges.thickness_min_px);
    r.get("thickness_max_px", c.ranges.thickness_max_px);
    r.get("center_jitter_px", c.ranges.center_jitter_px);
    r.get("shift_max_px", c.ranges.shift_max_px);
    r.get("reduction_min", c.ranges.reduction_min);
    r.get("reduction_max", c.ranges.reduction_max);
    r.finish();
  }
  if (f.has("texture")) {
    Fields t = f.sub("texture");
    t.get("background", c.texture.background);
    t.get("cavity", c.texture.cavity);
    t.get("myocardium", c.texture.myocardium);
    t.get("speckle_amplitude", c.texture.speckle_amplitude);
    t.get("speckle_sigma", c.texture.speckle_sigma);
    t.get("blur_sigma", c.texture.blur_sigma);
    t.finish();
  }
  f.finish();
  if (c.subjects < 1) throw ArgumentError("config simulate.subjects must be >= 1");
  c.sim.validate();
  c.sim.material.validate();
  return c;
}

json to_json(const CohortConfig& c) {
  return {{"seed", c.seed},
          {"subjects", c.subjects},
          {"rows", c.sim.rows},
          {"cols", c.sim.cols},
          {"spacing_mm", c.sim.spacing_mm},
          {"frames", c.sim.frames},
          {"ed_frame", c.sim.ed_frame},
          {"es_frame", c.sim.es_frame},
          {"target_elements", c.sim.target_elements},
          {"band_radius", c.sim.band_radius},
          {"material", {{"youngs_kpa", c.sim.material.youngs_kpa}, {"poisson", c.sim.material.poisson}}},
          {"ranges",
           {{"inner_min_px", c.ranges.inner_min_px},
            {"inner_max_px", c.ranges.inner_max_px},
            {"thickness_min_px", c.ranges.thickness_min_px},
            {"thickness_max_px", c.ranges.thickness_max_px},
            {"center_jitter_px", c.ranges.center_jitter_px},
            {"shift_max_px", c.ranges.shift_max_px},
            {"reduction_min", c.ranges.reduction_min},
            {"reduction_max", c.ranges.reduction_max}}},
          {"texture",
           {{"background", c.texture.background},
            {"cavity", c.texture.cavity},
            {"myocardium", c.texture.myocardium},
            {"speckle_amplitude", c.texture.speckle_amplitude},
            {"speckle_sigma", c.texture.speckle_sigma},
            {"blur_sigma", c.texture.blur_sigma}}}};
}

vae::TrainConfig train_config_from_json(const json& j) {
  vae::TrainConfig c;
  Fields f(j, "train");
  f.get("latent_dim", c.arch.latent_dim);
  f.get("encoder_channels", c.arch.encoder_channels);
  f.get("decoder_channels", c.arch.decoder_channels);
  f.get("recurrent", c.arch.recurrent);
  f.get("alpha", c.weights.alpha);
  f.get("beta", c.weights.beta);
  f.get("learning_rate", c.learning_rate);
  f.get("epochs", c.epochs);
  f.get("seed", c.seed);
  f.get("validation_fraction", c.validation_fraction);
  f.get("es_frame", c.es_frame);
  f.finish();
  if (c.epochs < 1) throw ArgumentError("config train.epochs must be >= 1");
  if (!(c.learning_rate > 0)) throw ArgumentError("config train.learning_rate must be > 0");
  if (c.weights.alpha < 0 || c.weights.beta < 0) throw ArgumentError("config train.alpha/beta must be >= 0");
  if (!(c.validation_fraction >= 0 && c.validation_fraction < 1)) {
    throw ArgumentError("config train.validation_fraction must lie in [0, 1)");
  }
  return c;
}

json to_json(const vae::TrainConfig& c) {
  return {{"latent_dim", c.arch.latent_dim},
          {"encoder_channels", c.arch.encoder_channels},
          {"decoder_channels", c.arch.decoder_channels},
          {"recurrent", c.arch.recurrent},
          {"alpha", c.weights.alpha},
          {"beta", c.weights.beta},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"validation_fraction", c.validation_fraction},
          {"es_frame", c.es_frame}};
}

reg::RegistrationConfig registration_from_json(const json& j) {
  reg::RegistrationConfig c;
  Fields f(j, "register");
  f.get("mu", c.mu);
  f.get("learning_rate", c.learning_rate);
  f.get("init_variance", c.init_variance);
  f.get("tolerance", c.tolerance);
  f.get("patience", c.patience);
  f.get("min_iterations", c.min_iterations);
  f.get("max_iterations", c.max_iterations);
  f.get("dilation_radius", c.dilation_radius);
  f.get("seed", c.seed);
  f.get("spacing_mm", c.spacing_mm);
  f.get("normalize_by_mask", c.normalize_by_mask);
  f.finish();
  c.validate();
  return c;
}

json to_json(const reg::RegistrationConfig& c) {
  return {{"mu", c.mu},
          {"learning_rate", c.learning_rate},
          {"init_variance", c.init_variance},
          {"tolerance", c.tolerance},
          {"patience", c.patience},
          {"min_iterations", c.min_iterations},
          {"max_iterations", c.max_iterations},
          {"dilation_radius", c.dilation_radius},
          {"seed", c.seed},
          {"spacing_mm", c.spacing_mm},
          {"normalize_by_mask", c.normalize_by_mask}};
}

json read_json(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ArgumentError("file not found: " + path.string());
  const auto bytes = io::read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ArgumentError("cannot parse " + path.string() + ": " + e.what());
  }
}

std::uint64_t seed_override(std::uint64_t fallback) {
  const char* v = std::getenv("BMTK_SEED");
  if (!v || !*v) return fallback;
  char* end = nullptr;
  errno = 0;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (errno != 0 || *end != '\0' || *v == '-') throw ArgumentError(std::string("BMTK_SEED is not a seed: ") + v);
  return s;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) { return splitmix(splitmix(seed) ^ (index + 1)); }

Subject make_subject(const CohortConfig& c, int index) {
  Subject s;
  char name[32];
  std::snprintf(name, sizeof name, "subject_%03d", index);
  s.name = name;
  Rng geo(derive_seed(c.seed, 2 * static_cast<std::uint64_t>(index)));
  s.geometry = sim::sample_geometry(geo, c.ranges);
  s.sim = sim::simulate_sequence(s.geometry, c.sim);
  Rng tex(derive_seed(c.seed, 2 * static_cast<std::uint64_t>(index) + 1));
  const Tensor ed = sim::make_ed_image(s.sim.ed_myocardium, s.sim.ed_cavity, tex, c.texture);
  s.cine = sim::synthesize_cine(ed, s.sim.sequence.fields);
  return s;
}

std::vector<std::filesystem::path> save_subject(const std::filesystem::path& dir, const Subject& s) {
  std::filesystem::create_directories(dir);
  const double sp = s.sim.sequence.spacing_mm;
  const json base = {{"subject", s.name}, {"spacing_mm", sp}, {"ed_frame", s.sim.schedule.ed_frame},
                     {"es_frame", s.sim.schedule.es_frame}};
  std::vector<std::filesystem::path> out;
  const auto put = [&](const char* file, const Tensor& t, json meta) {
    meta.update(base);
    out.push_back(dir / file);
    io::write_tensor(out.back(), t, meta);
    out.push_back(dir / (std::string(file) + ".json"));
  };
  put("fields.bmtk", s.sim.sequence.fields,
      {{"kind", "displacement"}, {"units", "px"}, {"layout", "T x 2 x M x N, channel 0 = column (x)"}});
  put("cine.bmtk", s.cine, {{"kind", "image"}, {"units", "intensity [0, 1]"}, {"layout", "T x M x N"}});
  put("masks.bmtk", s.sim.masks, {{"kind", "mask"}, {"layout", "T x M x N myocardium"}});
  put("ed_myocardium.bmtk", s.sim.ed_myocardium.to_tensor(), {{"kind", "mask"}, {"layout", "M x N"}});
  put("ed_cavity.bmtk", s.sim.ed_cavity.to_tensor(), {{"kind", "mask"}, {"layout", "M x N"}});
  return out;
}

std::vector<std::filesystem::path> subject_dirs(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(root)) throw ArgumentError("not a directory: " + root.string());
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    if (e.is_directory() && std::filesystem::exists(e.path() / "fields.bmtk")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace bmtk::app
