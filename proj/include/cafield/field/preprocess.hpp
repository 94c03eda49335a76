#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "cafield/field/grid.hpp"
#include "cafield/field/provider.hpp"

namespace cafield::field {

struct KMeansResult {
  std::vector<std::size_t> assignment;  // cluster per value; clusters sorted by ascending mean
  std::vector<double> means;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding; at most 100 iterations, stops
/// when no mean moves by more than 1e-9. Throws DegenerateInputError when
/// there are fewer than K distinct values.
KMeansResult kmeans_1d(const std::vector<double>& values, std::size_t k, std::uint64_t seed);

struct SceneBounds {
  Vec3 center;      // mean of foreground lattice coordinates
  double diagonal;  // diagonal of the foreground's axis-aligned box
  std::size_t foreground_count = 0;
};

inline constexpr std::size_t kProbeResolution = 32;

/// Probes a res³ lattice of cell centers on the unit cube, clusters the
/// normalized densities (K = 2) and summarizes the higher-mean cluster.
/// Throws DegenerateInputError when the scene has no density contrast.
SceneBounds scene_probe(const FieldProvider& provider, double d = kDefaultDepthStep,
                        std::uint64_t seed = 0, std::size_t res = kProbeResolution);

/// N³ lattice on the cube of side bounds.diagonal centered at bounds.center.
/// With r_aug the provider is queried at c + r_augᵀ(x - c), i.e. the field is
/// seen rotated by r_aug about the center.
DensityGrid resample_object_grid(const FieldProvider& provider, const SceneBounds& bounds,
                                 std::size_t n, double d = kDefaultDepthStep,
                                 const std::optional<Mat3>& r_aug = std::nullopt);

}  // namespace cafield::field
