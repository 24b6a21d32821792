#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "bmtk/core/tensor.hpp"

namespace bmtk::io {

/// "BMTK0001", u32 LE rank, rank x u64 LE extents, float32 LE payload.
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
/// Throws FormatError naming "magic", "rank", "extents" or "payload length".
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

/// Writes the container and, when `sidecar` is an object, `<path>.json` next to it.
void write_tensor(const std::filesystem::path& path, const Tensor& t,
                  const nlohmann::json& sidecar = nlohmann::json());
Tensor read_tensor(const std::filesystem::path& path);
/// Sidecar metadata, or an empty object when there is none.
nlohmann::json read_sidecar(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace bmtk::io
