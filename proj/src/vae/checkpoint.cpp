#include "bmtk/vae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "bmtk/errors.hpp"

namespace bmtk::vae {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'B', 'M', 'T', 'V', 'A', 'E', '0', '1'};
}

nlohmann::json architecture_to_json(const Architecture& a) {
  return {{"rows", a.rows},
          {"cols", a.cols},
          {"latent_dim", a.latent_dim},
          {"encoder_channels", a.encoder_channels},
          {"decoder_channels", a.decoder_channels},
          {"recurrent", a.recurrent}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
  Architecture a;
  try {
    a.rows = j.at("rows").get<std::size_t>();
    a.cols = j.at("cols").get<std::size_t>();
    a.latent_dim = j.at("latent_dim").get<int>();
    a.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
    a.decoder_channels = j.at("decoder_channels").get<std::vector<int>>();
    a.recurrent = j.at("recurrent").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("architecture", e.what());
  }
  try {
    a.validate();
  } catch (const ManifestError& e) {
    throw FormatError("architecture", e.what());
  }
  return a;
}

std::vector<std::uint8_t> serialize_checkpoint(const VaeCheckpoint& c) {
  const auto table = param_table(c.arch);
  if (table.size() != c.params.size()) throw ManifestError("checkpoint parameters do not match the architecture");
  nlohmann::json m;
  m["format"] = "BMTVAE01";
  m["architecture"] = architecture_to_json(c.arch);
  m["seed"] = c.seed;
  m["training"] = c.training;
  nlohmann::json layers = nlohmann::json::array();
  std::size_t count = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (c.params[i].shape() != table[i].shape) throw ManifestError("parameter " + table[i].name + " has the wrong shape");
    layers.push_back({{"name", table[i].name}, {"shape", table[i].shape}});
    count += c.params[i].size();
  }
  m["layers"] = layers;
  m["param_count"] = count;
  const std::string text = m.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  const auto len = static_cast<std::uint32_t>(text.size());
  const auto* lp = reinterpret_cast<const std::uint8_t*>(&len);
  out.insert(out.end(), lp, lp + 4);
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : c.params) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data());
    out.insert(out.end(), p, p + t.size() * sizeof(float));
  }
  return out;
}

VaeCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) throw FormatError("header", "file shorter than the 12-byte header");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("magic", "not a BMTVAE01 checkpoint");
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 4);
  if (bytes.size() < 12 + static_cast<std::size_t>(len)) throw FormatError("manifest", "manifest length exceeds file size");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest", e.what());
  }
  VaeCheckpoint c;
  if (!m.contains("architecture")) throw FormatError("architecture", "missing");
  c.arch = architecture_from_json(m["architecture"]);
  c.seed = m.value("seed", std::uint64_t{0});
  c.training = m.value("training", nlohmann::json::object());
  const auto table = param_table(c.arch);
  std::size_t expected = 0;
  for (const auto& t : table) expected += shape_size(t.shape);
  if (!m.contains("param_count") || m["param_count"].get<std::size_t>() != expected) {
    throw FormatError("param_count", "manifest count disagrees with the architecture (" + std::to_string(expected) + ")");
  }
  const std::size_t payload = bytes.size() - 12 - len;
  if (payload != expected * sizeof(float)) {
    throw FormatError("parameters", "payload holds " + std::to_string(payload) + " bytes, expected " +
                                        std::to_string(expected * sizeof(float)));
  }
  const std::uint8_t* p = bytes.data() + 12 + len;
  for (const auto& spec : table) {
    Tensor t(spec.shape);
    std::memcpy(t.data(), p, t.size() * sizeof(float));
    p += t.size() * sizeof(float);
    c.params.push_back(std::move(t));
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const VaeCheckpoint& c) {
  const auto bytes = serialize_checkpoint(c);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ArgumentError("write failed for " + path.string());
}

VaeCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace bmtk::vae
