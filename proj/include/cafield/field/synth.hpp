#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cafield/field/provider.hpp"

namespace cafield::field {

/// Built-in categories; each is a rotationally asymmetric composite of boxes.
const std::vector<std::string>& catalog();

/// Raw density deep inside a synthetic object (normalizes to ~0.95).
inline constexpr double kObjectSigma = 96.0;
/// Width of the logistic falloff across the object surface.
inline constexpr double kObjectFalloff = 0.01;

struct SyntheticInstance {
  std::string category;
  std::uint64_t seed = 0;
  so3::Mat3 r_gt = so3::Mat3::Identity();  // canonical -> scene
  Vec3 placement = Vec3::Constant(0.5);    // scene position of the canonical origin
  std::vector<double> dims;                // per-seed dimension factors
  double clutter = 0.0;
  double noise = 0.0;
};

struct Synthetic {
  SyntheticInstance instance;
  ProviderPtr provider;  // posed object + clutter + noise
  ProviderPtr object;    // posed object only
};

/// Deterministic in (category, seed); the pose, shape and clutter streams are
/// independent, so clutter/noise levels do not change the pose or shape.
/// Throws UsageError for an unknown category.
Synthetic synth_generate(const std::string& category, std::uint64_t seed, double clutter = 0.0,
                         double noise = 0.0, bool random_pose = true);

/// Signed distance of the instance's shape in its canonical frame.
Sdf canonical_sdf(const SyntheticInstance& inst);

/// Canonical shape posed by `pose` about `placement`, no clutter or noise.
ProviderPtr posed_object(const SyntheticInstance& inst, const so3::Mat3& pose,
                         const Vec3& placement);

/// Half extents of the canonical shape's axis-aligned box (about the origin).
Vec3 canonical_half_extent(const SyntheticInstance& inst);

/// n points near the canonical surface (|sdf| < shell) by seeded rejection sampling.
std::vector<Vec3> template_points(const SyntheticInstance& inst, std::size_t n = 512,
                                  std::uint64_t seed = 0, double shell = 0.006);

}  // namespace cafield::field
