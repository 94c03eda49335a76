#include "cafield/field/synth.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "cafield/error.hpp"
#include "cafield/random.hpp"
#include "cafield/so3/rotation.hpp"

namespace cafield::field {
namespace {

struct Part {
  Vec3 center;
  Vec3 half;
  bool subtract = false;
  // Optional half-space cut: points with normal·p > offset are removed.
  std::optional<std::pair<Vec3, double>> cut;
};

double box_sdf(const Vec3& p, const Vec3& c, const Vec3& h) {
  const Vec3 q = (p - c).cwiseAbs() - h;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

double part_sdf(const Part& part, const Vec3& p) {
  double d = box_sdf(p, part.center, part.half);
  if (part.cut) d = std::max(d, part.cut->first.dot(p) - part.cut->second);
  return d;
}

std::vector<Part> build_parts(const std::string& category, const std::vector<double>& s) {
  std::vector<Part> parts;
  if (category == "wedge") {
    const double a = 0.15 * s[0], b = 0.08 * s[1], h = 0.07 * s[2];
    // top face falls from z = h at x = -a to z = -0.7h at x = +a
    const Vec3 n = Vec3(1.7 * h / (2 * a), 0.0, 1.0).normalized();
    const double off = n.dot(Vec3(-a, 0.0, h));
    parts.push_back({Vec3::Zero(), Vec3(a, b, h), false, std::make_pair(n, off)});
    const Vec3 hh(0.03 * s[3], 0.035 * s[3], 0.025 * s[3]);
    parts.push_back({Vec3(-0.35 * a, b + hh.y() - 0.005, -h + hh.z()), hh, false, std::nullopt});
  } else if (category == "lblock") {
    const double a = 0.15 * s[0], t = 0.045 * s[1], h = 0.05 * s[2], b = 0.09 * s[3];
    parts.push_back({Vec3::Zero(), Vec3(a, t, h), false, std::nullopt});
    parts.push_back({Vec3(a - t, t + b - 0.005, 0.0), Vec3(t, b, h), false, std::nullopt});
    parts.push_back({Vec3(-a + 0.05, 0.0, h + 0.015), Vec3(0.03, 0.03, 0.02), false, std::nullopt});
  } else if (category == "slab") {
    const double a = 0.17 * s[0], b = 0.11 * s[1], h = 0.05 * s[2];
    // thickness tapers from 2h at x = -a to 0.8h at x = +a
    const Vec3 n = Vec3(1.2 * h / (2 * a), 0.0, 1.0).normalized();
    const double off = n.dot(Vec3(-a, 0.0, h));
    parts.push_back({Vec3::Zero(), Vec3(a, b, h), false, std::make_pair(n, off)});
    const double nx = 0.05 * s[3];
    parts.push_back({Vec3(a, b, 0.0), Vec3(nx, 0.8 * nx, 2 * h), true, std::nullopt});
  } else {
    throw UsageError("unknown category '" + category + "'");
  }
  // Center the union's axis-aligned box on the origin.
  Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
  for (const auto& p : parts) {
    if (p.subtract) continue;
    lo = lo.cwiseMin(p.center - p.half);
    hi = hi.cwiseMax(p.center + p.half);
  }
  const Vec3 mid = 0.5 * (lo + hi);
  for (auto& p : parts) {
    p.center -= mid;
    if (p.cut) p.cut->second -= p.cut->first.dot(mid);
  }
  return parts;
}

double composite_sdf(const std::vector<Part>& parts, const Vec3& p) {
  double add = 1e9, sub = -1e9;
  for (const auto& part : parts) {
    const double d = part_sdf(part, p);
    if (part.subtract) {
      sub = std::max(sub, -d);
    } else {
      add = std::min(add, d);
    }
  }
  return std::max(add, sub);
}

}  // namespace

const std::vector<std::string>& catalog() {
  static const std::vector<std::string> names{"wedge", "lblock", "slab"};
  return names;
}

Sdf canonical_sdf(const SyntheticInstance& inst) {
  auto parts = build_parts(inst.category, inst.dims);
  return [parts = std::move(parts)](const Vec3& p) { return composite_sdf(parts, p); };
}

Vec3 canonical_half_extent(const SyntheticInstance& inst) {
  Vec3 hi = Vec3::Zero();
  for (const auto& p : build_parts(inst.category, inst.dims)) {
    if (!p.subtract) hi = hi.cwiseMax((p.center + p.half).cwiseAbs()).cwiseMax((p.center - p.half).cwiseAbs());
  }
  return hi;
}

ProviderPtr posed_object(const SyntheticInstance& inst, const so3::Mat3& pose,
                         const Vec3& placement) {
  auto shape = std::make_shared<SdfProvider>(canonical_sdf(inst), kObjectSigma, kObjectFalloff);
  auto moved = std::make_shared<TranslatedProvider>(shape, placement);
  return std::make_shared<RotatedProvider>(moved, pose, placement);
}

Synthetic synth_generate(const std::string& category, std::uint64_t seed, double clutter,
                         double noise, bool random_pose) {
  const auto& cats = catalog();
  const auto it = std::find(cats.begin(), cats.end(), category);
  if (it == cats.end()) throw UsageError("unknown category '" + category + "'");
  if (clutter < 0.0 || noise < 0.0 || noise >= 1.0) {
    throw UsageError("clutter must be >= 0 and noise in [0, 1)");
  }
  const auto cat_id = static_cast<std::uint64_t>(it - cats.begin());
  const std::uint64_t base = mix_seed(seed, cat_id);

  SyntheticInstance inst;
  inst.category = category;
  inst.seed = seed;
  inst.clutter = clutter;
  inst.noise = noise;
  Rng shape_rng(mix_seed(base, 1));
  inst.dims.resize(4);
  for (auto& f : inst.dims) f = 1.0 + 0.15 * shape_rng.uniform(-1.0, 1.0);
  for (int a = 0; a < 3; ++a) inst.placement(a) = 0.5 + shape_rng.uniform(-0.05, 0.05);
  Rng pose_rng(mix_seed(base, 2));
  if (random_pose) inst.r_gt = so3::random_rotation(pose_rng).matrix();

  auto object = posed_object(inst, inst.r_gt, inst.placement);
  std::vector<ProviderPtr> parts{object};

  const auto blob_count = static_cast<std::size_t>(std::lround(clutter * 20.0));
  if (blob_count > 0) {
    // Posed object box, conservatively from the rotated canonical box.
    const Vec3 ext = inst.r_gt.cwiseAbs() * canonical_half_extent(inst);
    const double blob_sigma = 0.025;
    const double peak = -std::log(1.0 - 0.35) / kDefaultDepthStep;
    Rng clutter_rng(mix_seed(base, 3));
    std::vector<GaussianBlob> blobs;
    while (blobs.size() < blob_count) {
      const Vec3 c(clutter_rng.uniform(0.06, 0.94), clutter_rng.uniform(0.06, 0.94),
                   clutter_rng.uniform(0.06, 0.94));
      const Vec3 rel = (c - inst.placement).cwiseAbs() - ext;
      if (rel.maxCoeff() < 3.0 * blob_sigma) continue;
      blobs.push_back({c, peak * clutter_rng.uniform(0.6, 1.0), blob_sigma});
    }
    parts.push_back(std::make_shared<GaussianBlobs>(std::move(blobs)));
  }
  if (noise > 0.0) {
    parts.push_back(std::make_shared<NoiseProvider>(mix_seed(base, 4),
                                                    -std::log1p(-noise) / kDefaultDepthStep));
  }
  Synthetic out;
  out.instance = std::move(inst);
  out.object = object;
  out.provider = parts.size() == 1 ? object : std::make_shared<SumProvider>(std::move(parts));
  return out;
}

std::vector<Vec3> template_points(const SyntheticInstance& inst, std::size_t n, std::uint64_t seed,
                                  double shell) {
  const auto sdf = canonical_sdf(inst);
  const Vec3 ext = canonical_half_extent(inst) + Vec3::Constant(shell);
  Rng rng(mix_seed(mix_seed(inst.seed, seed), 0x7E3));
  std::vector<Vec3> pts;
  pts.reserve(n);
  std::size_t attempts = 0;
  while (pts.size() < n) {
    if (++attempts > 1000 * n + 100000) throw NumericError("template sampling did not converge");
    const Vec3 p(rng.uniform(-ext.x(), ext.x()), rng.uniform(-ext.y(), ext.y()),
                 rng.uniform(-ext.z(), ext.z()));
    if (std::abs(sdf(p)) < shell) pts.push_back(p);
  }
  return pts;
}

}  // namespace cafield::field
