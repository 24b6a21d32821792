#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bmtk/vae/model.hpp"

namespace bmtk::vae {

/// Trained parameters plus the manifest needed to rebuild the model.
struct VaeCheckpoint {
  Architecture arch;
  std::vector<Tensor> params;
  std::uint64_t seed = 0;
  nlohmann::json training = nlohmann::json::object();  // config echo and run summary

  TemporalVae model() const { return TemporalVae(arch, params); }
};

nlohmann::json architecture_to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);

/// "BMTVAE01", u32 LE manifest length, UTF-8 JSON manifest, float32 LE parameters.
std::vector<std::uint8_t> serialize_checkpoint(const VaeCheckpoint& ckpt);
/// Throws FormatError (naming the bad field) on any inconsistency.
VaeCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const VaeCheckpoint& ckpt);
VaeCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bmtk::vae
