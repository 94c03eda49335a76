#include "cafield/net/config.hpp"

#include "cafield/error.hpp"

namespace cafield::net {

std::string to_string(Weighting w) {
  return w == Weighting::Direct ? "direct" : "local-average";
}

std::string to_string(Signal s) { return s == Signal::Gradient ? "gradient" : "xyz"; }

Weighting parse_weighting(const std::string& s) {
  if (s == "direct") return Weighting::Direct;
  if (s == "local-average") return Weighting::LocalAverage;
  throw UsageError("weighting must be 'direct' or 'local-average', got '" + s + "'");
}

Signal parse_signal(const std::string& s) {
  if (s == "gradient") return Signal::Gradient;
  if (s == "xyz") return Signal::Xyz;
  throw UsageError("signal must be 'gradient' or 'xyz', got '" + s + "'");
}

void ModelConfig::validate() const {
  if (lmax < 1 || lmax > 3) throw UsageError("l_max must be in 1..3");
  for (auto c : channels) {
    if (c == 0) throw UsageError("channel counts must be positive");
  }
  if (embed == 0 || candidates == 0) throw UsageError("embed width and M must be positive");
  if (radii.empty()) throw UsageError("at least one radial shell is required");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0) || (i > 0 && !(radii[i] > radii[i - 1]))) {
      throw UsageError("radii must be positive and ascending");
    }
  }
  if (!(tau > 0.0) || !(cutoff > 0.0)) throw UsageError("tau and cutoff must be positive");
  if (neighbors == 0) throw UsageError("neighbor count must be >= 1");
  if (!(local_radius > 0.0)) throw UsageError("local-average radius must be positive");
  if (!(density_floor >= 0.0 && density_floor < 1.0)) throw UsageError("density floor must be in [0, 1)");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw UsageError("momentum must be in [0, 1)");
}

}  // namespace cafield::net
