#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace cafield::net {

enum class Weighting { Direct, LocalAverage };
enum class Signal { Gradient, Xyz };

std::string to_string(Weighting w);
std::string to_string(Signal s);
/// Throw UsageError on unknown names.
Weighting parse_weighting(const std::string& s);
Signal parse_signal(const std::string& s);

struct ModelConfig {
  int lmax = 3;
  std::array<std::size_t, 3> channels{8, 16, 32};
  std::size_t embed = 128;
  std::size_t candidates = 4;  // M
  // Radial shells in units of the source level spacing.
  std::vector<double> radii{1.0, 2.0, 3.0};
  double tau = 0.5;
  double cutoff = 4.5;
  std::size_t neighbors = 512;
  Weighting weighting = Weighting::Direct;
  double local_radius = 2.0;  // in level-0 lattice spacings
  Signal signal = Signal::Gradient;
  double density_floor = 0.01;
  std::size_t sphere_samples = 64;
  double bn_momentum = 0.75;

  /// Throws UsageError on out-of-range values.
  void validate() const;
};

}  // namespace cafield::net
