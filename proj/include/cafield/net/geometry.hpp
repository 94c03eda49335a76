#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace cafield::net {

using Vec3 = Eigen::Vector3d;

/// Neighborhoods and kernel values of one convolution, source level -> target level.
struct ConvGeometry {
  std::size_t targets = 0;
  std::size_t sources = 0;
  int kernel_lmax = 0;
  std::size_t shells = 0;
  std::vector<std::size_t> offsets;   // CSR row starts, size targets + 1
  std::vector<std::size_t> neighbor;  // source index per pair
  /// Per pair: shells x (kernel_lmax+1)² values phi_k(|u|) Y^n_m(u/|u|), u = p - y.
  std::vector<double> kernel;

  std::size_t kernel_width() const { return shells * static_cast<std::size_t>((kernel_lmax + 1) * (kernel_lmax + 1)); }
  std::size_t pairs() const { return neighbor.size(); }
};

struct GeometryConfig {
  std::vector<double> radii;  // absolute units
  double tau = 0.0;
  double cutoff = 0.0;
  std::size_t max_neighbors = 512;
  int kernel_lmax = 1;
};

/// Up to max_neighbors nearest sources within cutoff of each target, ordered
/// by (distance, index). Gaussian shells exp(-(|u| - r_k)² / 2tau²); the
/// angular factor is zero at u = 0 for degrees >= 1.
/// Throws DegenerateInputError if some target has no neighbor.
ConvGeometry build_conv_geometry(const std::vector<Vec3>& sources,
                                 const std::vector<Vec3>& targets, const GeometryConfig& cfg);

}  // namespace cafield::net
