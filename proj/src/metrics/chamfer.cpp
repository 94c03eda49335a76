#include "cafield/metrics/chamfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cafield/error.hpp"
#include "cafield/parallel.hpp"

namespace cafield::metrics {

namespace {

constexpr std::size_t kGridThreshold = 2048;

void check(const PointSet& a, const PointSet& b) {
  if (a.empty() || b.empty()) throw DegenerateInputError("chamfer distance of an empty point set");
  for (const auto* s : {&a, &b})
    for (const auto& p : *s)
      if (!p.allFinite()) throw DomainError("point set holds a non-finite coordinate");
}

double directed(const PointSet& from, const PointSet& to, const std::vector<std::size_t>& nn) {
  double s = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) s += (from[i] - to[nn[i]]).squaredNorm();
  return s / static_cast<double>(from.size());
}

}  // namespace

std::vector<std::size_t> nearest_brute(const PointSet& from, const PointSet& to) {
  if (to.empty()) throw DegenerateInputError("nearest neighbor in an empty set");
  std::vector<std::size_t> nn(from.size());
  parallel_for(from.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t j = 0; j < to.size(); ++j) {
        const double d = (from[i] - to[j]).squaredNorm();
        if (d < best) {
          best = d;
          arg = j;
        }
      }
      nn[i] = arg;
    }
  });
  return nn;
}

std::vector<std::size_t> nearest_grid(const PointSet& from, const PointSet& to) {
  if (to.empty()) throw DegenerateInputError("nearest neighbor in an empty set");
  Vec3 lo = to[0], hi = to[0];
  for (const auto& p : to) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = std::max((hi - lo).maxCoeff(), 1e-12);
  const long res = std::clamp(static_cast<long>(std::cbrt(static_cast<double>(to.size()))), 1L, 64L);
  const double h = extent / static_cast<double>(res) * (1.0 + 1e-9);
  auto cell = [&](const Vec3& p, int axis) {
    return std::clamp(static_cast<long>(std::floor((p[axis] - lo[axis]) / h)), 0L, res - 1);
  };
  // CSR buckets in index order, so scanning a bucket visits ascending indices.
  const std::size_t ncell = static_cast<std::size_t>(res * res * res);
  std::vector<std::size_t> start(ncell + 1, 0), items(to.size());
  auto flat = [&](long i, long j, long k) { return static_cast<std::size_t>((i * res + j) * res + k); };
  for (const auto& p : to) ++start[flat(cell(p, 0), cell(p, 1), cell(p, 2)) + 1];
  for (std::size_t c = 0; c < ncell; ++c) start[c + 1] += start[c];
  {
    std::vector<std::size_t> fill(start.begin(), start.end() - 1);
    for (std::size_t j = 0; j < to.size(); ++j) items[fill[flat(cell(to[j], 0), cell(to[j], 1), cell(to[j], 2))]++] = j;
  }
  std::vector<std::size_t> nn(from.size());
  parallel_for(from.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Vec3& q = from[i];
      // Position of q in (unclamped) cell coordinates.
      long qc[3];
      for (int a = 0; a < 3; ++a) qc[a] = static_cast<long>(std::floor((q[a] - lo[a]) / h));
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (long r = 0;; ++r) {
        bool any_cell = false;
        for (long di = -r; di <= r; ++di)
          for (long dj = -r; dj <= r; ++dj)
            for (long dk = -r; dk <= r; ++dk) {
              if (std::max({std::abs(di), std::abs(dj), std::abs(dk)}) != r) continue;
              const long ci = qc[0] + di, cj = qc[1] + dj, ck = qc[2] + dk;
              if (ci < 0 || cj < 0 || ck < 0 || ci >= res || cj >= res || ck >= res) continue;
              any_cell = true;
              const std::size_t c = flat(ci, cj, ck);
              for (std::size_t s = start[c]; s < start[c + 1]; ++s) {
                const std::size_t j = items[s];
                const double d = (q - to[j]).squaredNorm();
                if (d < best || (d == best && j < arg)) {
                  best = d;
                  arg = j;
                }
              }
            }
        // Every unvisited cell lies at least r*h away; stop once the best is
        // strictly closer, keeping a margin so ties are never cut off.
        const double bound = static_cast<double>(r) * h;
        if (best < bound * bound * (1.0 - 1e-9)) break;
        if (!any_cell) {
          // Ring entirely outside the lattice: all remaining rings are too.
          const long far = std::max({std::abs(qc[0]), std::abs(qc[1]), std::abs(qc[2]),
                                     std::abs(qc[0] - res), std::abs(qc[1] - res), std::abs(qc[2] - res)});
          if (r > far) break;
        }
      }
      nn[i] = arg;
    }
  });
  return nn;
}

double chamfer_brute(const PointSet& a, const PointSet& b) {
  check(a, b);
  return directed(a, b, nearest_brute(a, b)) + directed(b, a, nearest_brute(b, a));
}

double chamfer(const PointSet& a, const PointSet& b) {
  check(a, b);
  if (a.size() * b.size() <= kGridThreshold * kGridThreshold) return chamfer_brute(a, b);
  return directed(a, b, nearest_grid(a, b)) + directed(b, a, nearest_grid(b, a));
}

}  // namespace cafield::metrics
