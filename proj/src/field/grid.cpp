#include "cafield/field/grid.hpp"

#include <cmath>
#include <string>

#include "cafield/error.hpp"

namespace cafield::field {

double normalize_density(double sigma, double d) {
  if (!(sigma >= 0.0)) throw DomainError("density must be non-negative");
  if (!(d > 0.0)) throw DomainError("depth step must be positive");
  return -std::expm1(-d * sigma);
}

Vec3 DensityGrid::spacing() const {
  Vec3 s;
  for (int a = 0; a < 3; ++a) {
    s(a) = dims[a] > 1 ? diagonal / static_cast<double>(dims[a] - 1) : 0.0;
  }
  return s;
}

Vec3 DensityGrid::position(std::size_t i, std::size_t j, std::size_t k) const {
  const Vec3 s = spacing();
  return origin() + Vec3(s(0) * static_cast<double>(i), s(1) * static_cast<double>(j),
                         s(2) * static_cast<double>(k));
}

Vec3 DensityGrid::position(std::size_t flat) const {
  const std::size_t k = flat % dims[2];
  const std::size_t j = (flat / dims[2]) % dims[1];
  const std::size_t i = flat / (dims[1] * dims[2]);
  return position(i, j, k);
}

void DensityGrid::validate() const {
  if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2) throw FormatError("grid needs >= 2 cells per axis");
  if (values.size() != size()) {
    throw FormatError("grid holds " + std::to_string(values.size()) + " values, dims need " +
                      std::to_string(size()));
  }
  if (!(diagonal > 0.0) || !std::isfinite(diagonal) || !center.allFinite()) {
    throw FormatError("grid bounds are invalid");
  }
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw FormatError("grid density outside [0, 1]");
  }
}

std::vector<Vec3> finite_gradient(const DensityGrid& grid) {
  for (auto n : grid.dims) {
    if (n < 3) throw DomainError("finite_gradient needs at least 3 cells per axis");
  }
  const Vec3 h = grid.spacing();
  std::vector<Vec3> out(grid.size());
  const std::array<std::size_t, 3> strides{grid.dims[1] * grid.dims[2], grid.dims[2], 1};
  for (std::size_t i = 0; i < grid.dims[0]; ++i)
    for (std::size_t j = 0; j < grid.dims[1]; ++j)
      for (std::size_t k = 0; k < grid.dims[2]; ++k) {
        const std::size_t flat = grid.index(i, j, k);
        const std::array<std::size_t, 3> idx{i, j, k};
        Vec3 g;
        for (int a = 0; a < 3; ++a) {
          const std::size_t n = grid.dims[a];
          const std::size_t s = strides[a];
          const double* v = grid.values.data();
          if (idx[a] == 0) {
            g(a) = (v[flat + s] - v[flat]) / h(a);
          } else if (idx[a] == n - 1) {
            g(a) = (v[flat] - v[flat - s]) / h(a);
          } else {
            g(a) = (v[flat + s] - v[flat - s]) / (2.0 * h(a));
          }
        }
        out[flat] = g;
      }
  return out;
}

double local_average(const DensityGrid& grid, std::size_t flat, double radius) {
  const Vec3 h = grid.spacing();
  const std::size_t k0 = flat % grid.dims[2];
  const std::size_t j0 = (flat / grid.dims[2]) % grid.dims[1];
  const std::size_t i0 = flat / (grid.dims[1] * grid.dims[2]);
  const std::array<std::size_t, 3> c{i0, j0, k0};
  std::array<long, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    const long reach = h(a) > 0 ? static_cast<long>(std::floor(radius / h(a) + 1e-9)) : 0;
    lo[a] = std::max(0L, static_cast<long>(c[a]) - reach);
    hi[a] = std::min(static_cast<long>(grid.dims[a]) - 1, static_cast<long>(c[a]) + reach);
  }
  const double r2 = radius * radius * (1.0 + 1e-12);
  double sum = 0.0;
  std::size_t count = 0;
  for (long i = lo[0]; i <= hi[0]; ++i)
    for (long j = lo[1]; j <= hi[1]; ++j)
      for (long k = lo[2]; k <= hi[2]; ++k) {
        const double dx = h(0) * static_cast<double>(i - static_cast<long>(i0));
        const double dy = h(1) * static_cast<double>(j - static_cast<long>(j0));
        const double dz = h(2) * static_cast<double>(k - static_cast<long>(k0));
        if (dx * dx + dy * dy + dz * dz > r2) continue;
        sum += grid.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                       static_cast<std::size_t>(k));
        ++count;
      }
  return sum / static_cast<double>(count);
}

}  // namespace cafield::field
