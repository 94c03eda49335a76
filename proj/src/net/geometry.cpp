#include "cafield/net/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <unordered_map>

#include "cafield/error.hpp"
#include "cafield/parallel.hpp"
#include "cafield/so3/sh.hpp"

namespace cafield::net {
namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

CellKey cell_of(const Vec3& p, double size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / size)),
          static_cast<std::int64_t>(std::floor(p.y() / size)),
          static_cast<std::int64_t>(std::floor(p.z() / size))};
}

}  // namespace

ConvGeometry build_conv_geometry(const std::vector<Vec3>& sources,
                                 const std::vector<Vec3>& targets, const GeometryConfig& cfg) {
  if (!(cfg.cutoff > 0.0) || cfg.radii.empty() || cfg.max_neighbors == 0) {
    throw UsageError("invalid convolution geometry configuration");
  }
  ConvGeometry g;
  g.targets = targets.size();
  g.sources = sources.size();
  g.kernel_lmax = cfg.kernel_lmax;
  g.shells = cfg.radii.size();

  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells;
  for (std::size_t i = 0; i < sources.size(); ++i) cells[cell_of(sources[i], cfg.cutoff)].push_back(i);

  const double cut2 = cfg.cutoff * cfg.cutoff;
  // Distances are quantized before ordering so that a rigid rotation of the
  // whole point set, which perturbs them at round-off level, keeps the order.
  const double quantum = cut2 * 1e-9;
  std::vector<std::vector<std::size_t>> lists(targets.size());
  parallel_for(targets.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<std::pair<std::int64_t, std::size_t>> cand;
    for (std::size_t t = begin; t < end; ++t) {
      cand.clear();
      const CellKey c = cell_of(targets[t], cfg.cutoff);
      for (std::int64_t dx = -1; dx <= 1; ++dx)
        for (std::int64_t dy = -1; dy <= 1; ++dy)
          for (std::int64_t dz = -1; dz <= 1; ++dz) {
            auto it = cells.find({c.x + dx, c.y + dy, c.z + dz});
            if (it == cells.end()) continue;
            for (auto s : it->second) {
              const double d2 = (sources[s] - targets[t]).squaredNorm();
              if (d2 <= cut2) cand.emplace_back(std::llround(d2 / quantum), s);
            }
          }
      std::sort(cand.begin(), cand.end());
      if (cand.size() > cfg.max_neighbors) cand.resize(cfg.max_neighbors);
      lists[t].reserve(cand.size());
      for (const auto& [q, s] : cand) lists[t].push_back(s);
    }
  });

  g.offsets.assign(targets.size() + 1, 0);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (lists[t].empty()) throw DegenerateInputError("convolution target has no neighbors");
    g.offsets[t + 1] = g.offsets[t] + lists[t].size();
  }
  g.neighbor.reserve(g.offsets.back());
  for (auto& l : lists) g.neighbor.insert(g.neighbor.end(), l.begin(), l.end());

  const std::size_t width = g.kernel_width();
  const int sh_total = so3::sh_count(cfg.kernel_lmax);
  g.kernel.assign(g.pairs() * width, 0.0);
  parallel_for(targets.size(), [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd ang(sh_total);
    for (std::size_t t = begin; t < end; ++t) {
      for (std::size_t p = g.offsets[t]; p < g.offsets[t + 1]; ++p) {
        const Vec3 u = targets[t] - sources[g.neighbor[p]];
        const double r = u.norm();
        if (r > 0.0) {
          ang = so3::eval_real_sh_all(cfg.kernel_lmax, u / r);
        } else {
          ang.setZero();
          ang(0) = 0.5 / std::sqrt(std::numbers::pi);
        }
        double* row = g.kernel.data() + p * width;
        for (std::size_t k = 0; k < g.shells; ++k) {
          const double z = (r - cfg.radii[k]) / cfg.tau;
          const double phi = std::exp(-0.5 * z * z);
          for (int m = 0; m < sh_total; ++m) row[k * static_cast<std::size_t>(sh_total) + static_cast<std::size_t>(m)] = phi * ang(m);
        }
      }
    }
  });
  return g;
}

}  // namespace cafield::net
