#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace cafield::field {

using Vec3 = Eigen::Vector3d;

/// Default depth step for 1 - exp(-d sigma).
inline constexpr double kDefaultDepthStep = 0.03125;

/// 1 - exp(-d sigma). Throws DomainError for sigma < 0 or d <= 0.
double normalize_density(double sigma, double d);

/// Regular lattice of normalized densities over the axis-aligned cube of
/// side `diagonal` centered at `center`. Values are row-major with x slowest:
/// index = (i * ny + j) * nz + k.
struct DensityGrid {
  std::array<std::size_t, 3> dims{0, 0, 0};
  Vec3 center = Vec3::Constant(0.5);
  double diagonal = 1.0;
  std::vector<double> values;

  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return (i * dims[1] + j) * dims[2] + k;
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return values[index(i, j, k)]; }

  /// Lattice step along each axis.
  Vec3 spacing() const;
  Vec3 origin() const { return center - Vec3::Constant(diagonal / 2.0); }
  Vec3 position(std::size_t i, std::size_t j, std::size_t k) const;
  Vec3 position(std::size_t flat) const;

  /// Throws FormatError if dims, values or bounds are inconsistent, or a
  /// value lies outside [0, 1].
  void validate() const;
};

/// Central differences in the interior, one-sided on boundary layers;
/// gradient with respect to scene-frame coordinates, one per lattice point.
std::vector<Vec3> finite_gradient(const DensityGrid& grid);

/// Mean of lattice values within `radius` (scene units) of lattice point `flat`.
double local_average(const DensityGrid& grid, std::size_t flat, double radius);

}  // namespace cafield::field
