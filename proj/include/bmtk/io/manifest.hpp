#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bmtk::io {

/// Lowercase hex SHA-256 of a byte string / a file's contents.
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_file(const std::filesystem::path& path);

struct FileRecord {
  std::string path;  // as listed: relative to the manifest for outputs
  std::string sha256;
  std::uintmax_t bytes = 0;
};

/// Per-stage provenance record written next to every stage's outputs.
class RunManifest {
 public:
  explicit RunManifest(std::string stage) : stage_(std::move(stage)) {}

  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_input(const std::filesystem::path& path);
  /// Hashes `path` and lists it relative to `root`.
  void add_output(const std::filesystem::path& path, const std::filesystem::path& root);
  void add_timing(const std::string& step, double seconds);
  void set_extra(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }

  const std::vector<FileRecord>& outputs() const { return outputs_; }
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::string stage_;
  nlohmann::json config_ = nlohmann::json::object();
  std::uint64_t seed_ = 0;
  std::vector<FileRecord> inputs_, outputs_;
  nlohmann::json timings_ = nlohmann::json::object();
  nlohmann::json extra_ = nlohmann::json::object();
};

/// Sorted (path, sha256) pairs of a manifest's outputs: the part that must match across reruns.
std::vector<std::pair<std::string, std::string>> output_hashes(const nlohmann::json& manifest);

}  // namespace bmtk::io
