#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cafield/field/grid.hpp"
#include "cafield/so3/rotation.hpp"

namespace cafield::field {

// Grid file: "CAFG", u16 version, 3 x u32 dims, 4 x f32 (center xyz,
// diagonal), then f32 densities in row-major order. All little-endian.
inline constexpr std::uint16_t kGridVersion = 1;
inline constexpr std::size_t kGridHeaderBytes = 4 + 2 + 3 * 4 + 4 * 4;

/// Values are stored as f32; the grid written is the grid read back only if
/// its values and bounds are f32-representable (see round_to_float).
void write_grid(const std::filesystem::path& path, const DensityGrid& grid);
/// Throws FormatError on bad magic/version/truncation, IoError if unreadable.
DensityGrid read_grid(const std::filesystem::path& path);

/// Rounds values and bounds to the nearest f32 so a write/read round trip is exact.
void round_to_float(DensityGrid& grid);

struct ManifestEntry {
  std::string category;
  std::uint64_t seed = 0;
  std::string path;  // relative to the manifest directory
  so3::Mat3 r_gt = so3::Mat3::Identity();
};

struct Manifest {
  /// Generation settings recorded in the header line as key=value pairs.
  std::vector<std::pair<std::string, std::string>> settings;
  std::vector<ManifestEntry> entries;

  std::string setting(const std::string& key, const std::string& fallback) const;
};

void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace cafield::field
