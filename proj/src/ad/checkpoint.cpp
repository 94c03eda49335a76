#include "cafield/ad/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cafield/error.hpp"

namespace cafield::ad {
namespace {

constexpr const char* kVersion = "cafield-ckpt-v1";

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p += ".bin";
  return p;
}

}  // namespace

const Tensor& Checkpoint::at(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

const std::string& Checkpoint::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint has no metadata key '" + key + "'");
  return it->second;
}

void write_checkpoint(const std::filesystem::path& manifest, const Checkpoint& ckpt) {
  std::ofstream blob(blob_path(manifest), std::ios::binary);
  std::ofstream text(manifest);
  if (!blob || !text) throw IoError("cannot write checkpoint " + manifest.string());

  text << kVersion << '\n';
  text << "blob " << blob_path(manifest).filename().string() << '\n';
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw UsageError("checkpoint metadata must be single-token keys and single-line values");
    }
    text << "meta " << k << ' ' << v << '\n';
  }
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    text << "tensor " << name << ' ' << offset << ' ' << t.rank();
    for (auto e : t.shape()) text << ' ' << e;
    text << '\n';
    for (double v : t.values()) {
      const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
      blob.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    offset += t.size() * sizeof(double);
  }
  if (!blob || !text) throw IoError("failed writing checkpoint " + manifest.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& manifest) {
  std::ifstream text(manifest);
  if (!text) throw IoError("cannot open checkpoint " + manifest.string());
  std::string line;
  if (!std::getline(text, line) || line != kVersion) {
    throw FormatError(manifest.string() + ": not a " + kVersion + " manifest");
  }
  std::ifstream blob(blob_path(manifest), std::ios::binary);
  if (!blob) throw IoError("missing checkpoint blob " + blob_path(manifest).string());
  blob.seekg(0, std::ios::end);
  const auto blob_size = static_cast<std::uint64_t>(blob.tellg());

  Checkpoint ckpt;
  while (std::getline(text, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    if (kind == "blob") continue;
    if (kind == "meta") {
      std::string key, value;
      is >> key;
      std::getline(is >> std::ws, value);
      ckpt.meta[key] = value;
    } else if (kind == "tensor") {
      std::string name;
      std::uint64_t offset = 0;
      std::size_t rank = 0;
      if (!(is >> name >> offset >> rank)) throw FormatError("bad tensor line: " + line);
      Shape shape(rank);
      for (auto& e : shape) {
        if (!(is >> e)) throw FormatError("bad tensor shape: " + line);
      }
      const std::size_t n = shape_size(shape);
      if (offset + n * sizeof(double) > blob_size) {
        throw FormatError("checkpoint blob truncated at tensor " + name);
      }
      std::vector<double> values(n);
      blob.seekg(static_cast<std::streamoff>(offset));
      for (auto& v : values) {
        std::uint64_t bits = 0;
        blob.read(reinterpret_cast<char*>(&bits), sizeof bits);
        v = std::bit_cast<double>(to_le(bits));
      }
      if (!blob) throw FormatError("checkpoint blob read failed at tensor " + name);
      ckpt.tensors.emplace_back(name, Tensor(std::move(shape), std::move(values)));
    } else {
      throw FormatError("unknown checkpoint line: " + line);
    }
  }
  return ckpt;
}

}  // namespace cafield::ad
