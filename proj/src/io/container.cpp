#include "bmtk/io/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "bmtk/errors.hpp"

namespace bmtk::io {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'B', 'M', 'T', 'K', '0', '0', '0', '1'};
constexpr std::uint32_t kMaxRank = 16;

template <class U>
void put(std::vector<std::uint8_t>& out, U v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(U));
}

template <class U>
U get(const std::vector<std::uint8_t>& in, std::size_t at) {
  U v;
  std::memcpy(&v, in.data() + at, sizeof(U));
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  out.reserve(12 + 8 * t.rank() + 4 * t.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
  const auto* p = reinterpret_cast<const std::uint8_t*>(t.data());
  out.insert(out.end(), p, p + 4 * t.size());
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& b) {
  if (b.size() < 8 || std::memcmp(b.data(), kMagic, 8) != 0) throw FormatError("magic", "not a BMTK0001 container");
  if (b.size() < 12) throw FormatError("rank", "file ends inside the rank field");
  const auto rank = get<std::uint32_t>(b, 8);
  if (rank > kMaxRank) throw FormatError("rank", "rank " + std::to_string(rank) + " exceeds " + std::to_string(kMaxRank));
  const std::size_t header = 12 + 8 * static_cast<std::size_t>(rank);
  if (b.size() < header) throw FormatError("extents", "file ends inside the extents");
  Shape shape(rank);
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto e = get<std::uint64_t>(b, 12 + 8 * i);
    if (e != 0 && count > std::numeric_limits<std::uint64_t>::max() / 4 / e) {
      throw FormatError("extents", "element count overflows");
    }
    count *= e;
    shape[i] = static_cast<std::size_t>(e);
  }
  if (b.size() - header != 4 * count) {
    throw FormatError("payload length", "expected " + std::to_string(4 * count) + " bytes, found " +
                                            std::to_string(b.size() - header));
  }
  Tensor t(shape);
  if (count) std::memcpy(t.data(), b.data() + header, 4 * count);
  return t;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArgumentError("write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t, const nlohmann::json& sidecar) {
  write_file(path, encode_tensor(t));
  if (sidecar.is_object()) write_text(path.string() + ".json", sidecar.dump(2) + "\n");
}

Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

nlohmann::json read_sidecar(const std::filesystem::path& path) {
  const std::filesystem::path side = path.string() + ".json";
  if (!std::filesystem::exists(side)) return nlohmann::json::object();
  const auto bytes = read_file(side);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("sidecar", e.what());
  }
}

}  // namespace bmtk::io
