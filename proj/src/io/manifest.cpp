#include "bmtk/io/manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>

#include "bmtk/errors.hpp"
#include "bmtk/io/container.hpp"

namespace bmtk::io {

namespace {

struct Digest {
  EVP_MD_CTX* ctx;
  Digest() : ctx(EVP_MD_CTX_new()) {
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  }
  ~Digest() { EVP_MD_CTX_free(ctx); }
  Digest(const Digest&) = delete;
  Digest& operator=(const Digest&) = delete;
  void update(const void* p, std::size_t n) {
    if (EVP_DigestUpdate(ctx, p, n) != 1) throw Error("sha256 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx, md.data(), &len) != 1) throw Error("sha256 final failed");
    std::string s;
    char buf[3];
    for (unsigned i = 0; i < len; ++i) {
      std::snprintf(buf, sizeof buf, "%02x", md[i]);
      s += buf;
    }
    return s;
  }
};

}  // namespace

std::string sha256_hex(const void* data, std::size_t size) {
  Digest d;
  d.update(data, size);
  return d.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  Digest d;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return d.hex();
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs_.push_back({path.generic_string(), sha256_file(path), std::filesystem::file_size(path)});
}

void RunManifest::add_output(const std::filesystem::path& path, const std::filesystem::path& root) {
  const auto rel = std::filesystem::relative(path, root);
  outputs_.push_back({rel.generic_string(), sha256_file(path), std::filesystem::file_size(path)});
}

void RunManifest::add_timing(const std::string& step, double seconds) { timings_[step] = seconds; }

nlohmann::json RunManifest::to_json() const {
  const auto files = [](const std::vector<FileRecord>& v) {
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
    nlohmann::json a = nlohmann::json::array();
    for (const auto& f : sorted) a.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
    return a;
  };
  nlohmann::json j;
  j["tool"] = "bmtk";
  j["stage"] = stage_;
  j["seed"] = seed_;
  j["config"] = config_;
  j["inputs"] = files(inputs_);
  j["outputs"] = files(outputs_);
  j["timings_s"] = timings_;
  if (!extra_.empty()) j["extra"] = extra_;
  return j;
}

void RunManifest::write(const std::filesystem::path& path) const { write_text(path, to_json().dump(2) + "\n"); }

std::vector<std::pair<std::string, std::string>> output_hashes(const nlohmann::json& m) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : m.at("outputs")) out.emplace_back(f.at("path").get<std::string>(), f.at("sha256").get<std::string>());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace bmtk::io
