#include "cafield/field/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "cafield/error.hpp"
#include "cafield/parallel.hpp"
#include "cafield/random.hpp"

namespace cafield::field {

KMeansResult kmeans_1d(const std::vector<double>& values, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw UsageError("kmeans_1d needs K >= 1");
  {
    std::set<double> distinct;
    for (double v : values) {
      distinct.insert(v);
      if (distinct.size() >= k) break;
    }
    if (distinct.size() < k) {
      throw DegenerateInputError("kmeans_1d: fewer than " + std::to_string(k) + " distinct values");
    }
  }
  const std::size_t n = values.size();
  Rng rng(seed);

  std::vector<double> means;
  means.push_back(values[rng.index(n)]);
  std::vector<double> d2(n);
  while (means.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double m : means) best = std::min(best, (values[i] - m) * (values[i] - m));
      d2[i] = best;
      total += best;
    }
    double target = rng.uniform() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      target -= d2[i];
      if (target < 0.0) {
        pick = i;
        break;
      }
    }
    while (d2[pick] <= 0.0) pick = (pick + n - 1) % n;
    means.push_back(values[pick]);
  }

  KMeansResult res;
  res.assignment.assign(n, 0);
  std::vector<double> sums(k);
  std::vector<std::size_t> counts(k);
  for (res.iterations = 1; res.iterations <= 100; ++res.iterations) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::abs(values[i] - means[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double dc = std::abs(values[i] - means[c]);
        if (dc < bd) {
          bd = dc;
          best = c;
        }
      }
      res.assignment[i] = best;
    }
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[res.assignment[i]] += values[i];
      ++counts[res.assignment[i]];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      const double m = sums[c] / static_cast<double>(counts[c]);
      shift = std::max(shift, std::abs(m - means[c]));
      means[c] = m;
    }
    if (shift <= 1e-9) break;
  }
  res.iterations = std::min<std::size_t>(res.iterations, 100);

  std::vector<std::size_t> order(k);
  for (std::size_t c = 0; c < k; ++c) order[c] = c;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return means[a] < means[b]; });
  std::vector<std::size_t> rank(k);
  for (std::size_t r = 0; r < k; ++r) rank[order[r]] = r;
  for (auto& a : res.assignment) a = rank[a];
  res.means.resize(k);
  for (std::size_t c = 0; c < k; ++c) res.means[rank[c]] = means[c];
  return res;
}

SceneBounds scene_probe(const FieldProvider& provider, double d, std::uint64_t seed,
                        std::size_t res) {
  const std::size_t n = res * res * res;
  std::vector<double> values(n);
  std::vector<Vec3> pos(n);
  const double h = 1.0 / static_cast<double>(res);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t f = begin; f < end; ++f) {
      const std::size_t k = f % res, j = (f / res) % res, i = f / (res * res);
      pos[f] = Vec3((static_cast<double>(i) + 0.5) * h, (static_cast<double>(j) + 0.5) * h,
                    (static_cast<double>(k) + 0.5) * h);
      values[f] = provider.normalized(pos[f], d);
    }
  });
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*hi - *lo < 1e-12) throw DegenerateInputError("scene has no density contrast");

  const auto km = kmeans_1d(values, 2, seed);
  SceneBounds b;
  Vec3 sum = Vec3::Zero();
  Vec3 mn = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 mx = -mn;
  for (std::size_t f = 0; f < n; ++f) {
    if (km.assignment[f] != 1) continue;
    sum += pos[f];
    mn = mn.cwiseMin(pos[f]);
    mx = mx.cwiseMax(pos[f]);
    ++b.foreground_count;
  }
  if (b.foreground_count == 0) throw DegenerateInputError("scene has an empty foreground");
  b.center = sum / static_cast<double>(b.foreground_count);
  b.diagonal = std::max((mx - mn).norm(), h);
  return b;
}

DensityGrid resample_object_grid(const FieldProvider& provider, const SceneBounds& bounds,
                                 std::size_t n, double d, const std::optional<Mat3>& r_aug) {
  if (n < 8) throw UsageError("object grid resolution must be >= 8");
  DensityGrid g;
  g.dims = {n, n, n};
  g.center = bounds.center;
  g.diagonal = bounds.diagonal;
  g.values.resize(g.size());
  const Vec3 c = bounds.center;
  parallel_for(g.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t f = begin; f < end; ++f) {
      Vec3 x = g.position(f);
      if (r_aug) x = c + r_aug->transpose() * (x - c);
      g.values[f] = provider.normalized(x, d);
    }
  });
  return g;
}

}  // namespace cafield::field
