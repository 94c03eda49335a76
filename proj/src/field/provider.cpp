#include "cafield/field/provider.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "cafield/error.hpp"
#include "cafield/random.hpp"
#include "cafield/so3/sh.hpp"

namespace cafield::field {

std::optional<Vec3> normalized_gradient(const FieldProvider& p, const Vec3& x, double d) {
  auto g = p.density_gradient(x);
  if (!g) return std::nullopt;
  return Vec3(d * std::exp(-d * p.density(x)) * *g);
}

double GaussianBlobs::density(const Vec3& x) const {
  double s = 0.0;
  for (const auto& b : blobs_) {
    s += b.amplitude * std::exp(-(x - b.center).squaredNorm() / (2.0 * b.sigma * b.sigma));
  }
  return s;
}

std::optional<Vec3> GaussianBlobs::density_gradient(const Vec3& x) const {
  Vec3 g = Vec3::Zero();
  for (const auto& b : blobs_) {
    const double s2 = b.sigma * b.sigma;
    const Vec3 dx = x - b.center;
    g -= b.amplitude * std::exp(-dx.squaredNorm() / (2.0 * s2)) / s2 * dx;
  }
  return g;
}

double SdfProvider::density(const Vec3& x) const {
  const double t = -sdf_(x) / width_;
  // numerically stable logistic
  const double s = t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
  return sigma_max_ * s;
}

double RotatedProvider::density(const Vec3& x) const {
  return base_->density(pivot_ + r_.transpose() * (x - pivot_));
}

double RotatedProvider::normalized(const Vec3& x, double d) const {
  return base_->normalized(pivot_ + r_.transpose() * (x - pivot_), d);
}

std::optional<Vec3> RotatedProvider::density_gradient(const Vec3& x) const {
  auto g = base_->density_gradient(pivot_ + r_.transpose() * (x - pivot_));
  if (!g) return std::nullopt;
  return Vec3(r_ * *g);
}

double SumProvider::density(const Vec3& x) const {
  double s = 0.0;
  for (const auto& p : parts_) s += p->density(x);
  return s;
}

std::optional<Vec3> SumProvider::density_gradient(const Vec3& x) const {
  Vec3 g = Vec3::Zero();
  for (const auto& p : parts_) {
    auto gp = p->density_gradient(x);
    if (!gp) return std::nullopt;
    g += *gp;
  }
  return g;
}

double NoiseProvider::lattice(long i, long j, long k) const {
  std::uint64_t h = mix_seed(seed_, static_cast<std::uint64_t>(i));
  h = mix_seed(h, static_cast<std::uint64_t>(j));
  h = mix_seed(h, static_cast<std::uint64_t>(k));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double NoiseProvider::density(const Vec3& x) const {
  const Vec3 u = x * static_cast<double>(cells_);
  const Vec3 f = u.array().floor();
  const Vec3 t = u - f;
  const long i = static_cast<long>(f(0)), j = static_cast<long>(f(1)), k = static_cast<long>(f(2));
  double v = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const double w = (a ? t(0) : 1 - t(0)) * (b ? t(1) : 1 - t(1)) * (c ? t(2) : 1 - t(2));
        v += w * lattice(i + a, j + b, k + c);
      }
  return amplitude_ * v;
}

GridProvider::GridProvider(DensityGrid grid, double depth_step)
    : grid_(std::move(grid)), depth_step_(depth_step) {
  grid_.validate();
  if (!(depth_step > 0.0)) throw DomainError("depth step must be positive");
}

double GridProvider::interpolate(const Vec3& x) const {
  const Vec3 h = grid_.spacing();
  Vec3 u = (x - grid_.origin()).cwiseQuotient(h);
  for (int a = 0; a < 3; ++a) {
    if (std::abs(u(a) - std::round(u(a))) < 1e-9) u(a) = std::round(u(a));
  }
  std::array<std::size_t, 3> base{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    const double n = static_cast<double>(grid_.dims[a] - 1);
    if (!(u(a) >= 0.0 && u(a) <= n)) return 0.0;
    double fl = std::floor(u(a));
    if (fl >= n) fl = n - 1;
    base[a] = static_cast<std::size_t>(fl);
    frac[a] = u(a) - fl;
  }
  double v = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const double w = (a ? frac[0] : 1 - frac[0]) * (b ? frac[1] : 1 - frac[1]) *
                         (c ? frac[2] : 1 - frac[2]);
        if (w == 0.0) continue;
        v += w * grid_.at(base[0] + a, base[1] + b, base[2] + c);
      }
  return v;
}

double GridProvider::normalized(const Vec3& x, double) const { return interpolate(x); }

double GridProvider::density(const Vec3& x) const {
  const double v = std::min(interpolate(x), 1.0 - 1e-15);
  return -std::log1p(-v) / depth_step_;
}

}  // namespace cafield::field

namespace cafield::field {

double ball_average(const FieldProvider& p, const Vec3& x, double r, double d, std::size_t radial,
                    std::size_t directions) {
  // Uniform in volume: substitute t = (rho/r)^3 in [0, 1], Gauss-Legendre in t.
  std::vector<double> nodes(radial), weights(radial);
  for (std::size_t i = 0; i < radial; ++i) {
    const double n = static_cast<double>(radial);
    double t = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (std::size_t k = 2; k <= radial; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2 * kk - 1) * t * p1 - (kk - 1) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (t * p1 - p0) / (t * t - 1);
      const double step = p1 / dp;
      t -= step;
      if (std::abs(step) < 1e-16) break;
    }
    nodes[i] = 0.5 * (t + 1.0);
    weights[i] = 1.0 / ((1 - t * t) * dp * dp);  // half of the [-1,1] weight
  }
  const auto dirs = so3::fibonacci_sphere(directions);
  double acc = 0.0;
  for (std::size_t i = 0; i < radial; ++i) {
    const double rho = r * std::cbrt(nodes[i]);
    double shell = 0.0;
    for (const auto& u : dirs) shell += p.normalized(x + rho * u, d);
    acc += weights[i] * shell / static_cast<double>(directions);
  }
  return acc;
}

}  // namespace cafield::field
