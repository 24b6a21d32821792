#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bmtk/reg/registration.hpp"
#include "bmtk/sim/cine.hpp"
#include "bmtk/sim/simulate.hpp"
#include "bmtk/vae/train.hpp"

namespace bmtk::app {

/// Synthetic cohort description (the `simulate` stage config).
struct CohortConfig {
  std::uint64_t seed = 0;
  int subjects = 8;
  sim::SimulationConfig sim;
  sim::CohortRanges ranges;
  sim::CineTexture texture;
};

/// Parsers reject unknown keys and wrong types with ArgumentError; absent keys keep defaults.
CohortConfig cohort_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CohortConfig& c);
vae::TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const vae::TrainConfig& c);
reg::RegistrationConfig registration_from_json(const nlohmann::json& j);
nlohmann::json to_json(const reg::RegistrationConfig& c);

nlohmann::json read_json(const std::filesystem::path& path);

/// BMTK_SEED when set (decimal), otherwise `fallback`. Throws ArgumentError on a malformed value.
std::uint64_t seed_override(std::uint64_t fallback);

/// Independent stream seed for item `index` of a run seeded with `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

struct Subject {
  std::string name;  // subject_NNN
  sim::SubjectGeometry geometry;
  sim::SimulatedSubject sim;
  Tensor cine;  // T x M x N in [0, 1]
};

/// Deterministic in (config, index).
Subject make_subject(const CohortConfig& config, int index);

/// fields.bmtk, cine.bmtk, masks.bmtk, ed_myocardium.bmtk, ed_cavity.bmtk (+ sidecars). Returns files written.
std::vector<std::filesystem::path> save_subject(const std::filesystem::path& dir, const Subject& s);

/// Subdirectories of `root` holding fields.bmtk, sorted by name.
std::vector<std::filesystem::path> subject_dirs(const std::filesystem::path& root);

}  // namespace bmtk::app
