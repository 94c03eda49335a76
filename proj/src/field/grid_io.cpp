#include "cafield/field/grid_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cafield/error.hpp"

namespace cafield::field {
namespace {

constexpr char kMagic[4] = {'C', 'A', 'F', 'G'};
constexpr const char* kManifestTag = "# cafield-manifest-v1";

template <typename T>
void put(std::string& buf, T v) {
  using U = std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint32_t>;
  U bits = std::bit_cast<U>(v);
  for (std::size_t b = 0; b < sizeof(U); ++b) buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

template <typename T>
T get(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<U>(static_cast<U>(p[b]) << (8 * b));
  return std::bit_cast<T>(bits);
}

}  // namespace

void round_to_float(DensityGrid& grid) {
  for (auto& v : grid.values) v = static_cast<double>(static_cast<float>(v));
  for (int a = 0; a < 3; ++a) grid.center(a) = static_cast<double>(static_cast<float>(grid.center(a)));
  grid.diagonal = static_cast<double>(static_cast<float>(grid.diagonal));
}

void write_grid(const std::filesystem::path& path, const DensityGrid& grid) {
  grid.validate();
  std::string buf(kMagic, 4);
  buf.reserve(kGridHeaderBytes + 4 * grid.size());
  put<std::uint16_t>(buf, kGridVersion);
  for (auto dim : grid.dims) put<std::uint32_t>(buf, static_cast<std::uint32_t>(dim));
  for (int a = 0; a < 3; ++a) put<float>(buf, static_cast<float>(grid.center(a)));
  put<float>(buf, static_cast<float>(grid.diagonal));
  for (double v : grid.values) put<float>(buf, static_cast<float>(v));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write grid " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("failed writing grid " + path.string());
}

DensityGrid read_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open grid " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kGridHeaderBytes) throw FormatError(path.string() + ": truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(path.string() + ": bad magic");
  const auto version = get<std::uint16_t>(bytes.data() + 4);
  if (version != kGridVersion) {
    throw FormatError(path.string() + ": unsupported grid version " + std::to_string(version));
  }
  DensityGrid g;
  for (int a = 0; a < 3; ++a) g.dims[a] = get<std::uint32_t>(bytes.data() + 6 + 4 * a);
  for (int a = 0; a < 3; ++a) g.center(a) = get<float>(bytes.data() + 18 + 4 * a);
  g.diagonal = get<float>(bytes.data() + 30);
  const std::size_t n = g.size();
  if (bytes.size() != kGridHeaderBytes + 4 * n) {
    throw FormatError(path.string() + ": payload size does not match dims");
  }
  g.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.values[i] = get<float>(bytes.data() + kGridHeaderBytes + 4 * i);
  g.validate();
  return g;
}

std::string Manifest::setting(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : settings) {
    if (k == key) return v;
  }
  return fallback;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << kManifestTag;
  for (const auto& [k, v] : m.settings) out << ' ' << k << '=' << v;
  out << '\n';
  out << std::setprecision(17);
  for (const auto& e : m.entries) {
    out << e.category << ' ' << e.seed << ' ' << e.path;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out << ' ' << e.r_gt(r, c);
    out << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  if (!std::getline(in, line) || line.rfind(kManifestTag, 0) != 0) {
    throw FormatError(path.string() + ": missing manifest header");
  }
  std::istringstream hs(line.substr(std::strlen(kManifestTag)));
  std::string kv;
  while (hs >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw FormatError("bad manifest setting: " + kv);
    m.settings.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    ManifestEntry e;
    if (!(is >> e.category >> e.seed >> e.path)) throw FormatError("bad manifest line: " + line);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        if (!(is >> e.r_gt(r, c))) throw FormatError("bad rotation in manifest line: " + line);
      }
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace cafield::field
