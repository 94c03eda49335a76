#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "cafield/field/grid.hpp"
#include "cafield/so3/rotation.hpp"

namespace cafield::field {

using so3::Mat3;

/// Raw density sigma(x) >= 0 over scene coordinates.
class FieldProvider {
 public:
  virtual ~FieldProvider() = default;
  virtual double density(const Vec3& x) const = 0;
  virtual double normalized(const Vec3& x, double d) const {
    return normalize_density(density(x), d);
  }
  /// Analytic gradient of the raw density, when the provider has one.
  virtual std::optional<Vec3> density_gradient(const Vec3&) const { return std::nullopt; }
};

using ProviderPtr = std::shared_ptr<const FieldProvider>;

/// Gradient of the normalized density, d exp(-d sigma) grad sigma, or
/// nullopt when the provider is not analytic.
std::optional<Vec3> normalized_gradient(const FieldProvider& p, const Vec3& x, double d);

struct GaussianBlob {
  Vec3 center;
  double amplitude;  // peak raw density
  double sigma;      // standard deviation
};

class GaussianBlobs final : public FieldProvider {
 public:
  explicit GaussianBlobs(std::vector<GaussianBlob> blobs) : blobs_(std::move(blobs)) {}
  double density(const Vec3& x) const override;
  std::optional<Vec3> density_gradient(const Vec3& x) const override;
  const std::vector<GaussianBlob>& blobs() const { return blobs_; }

 private:
  std::vector<GaussianBlob> blobs_;
};

/// Constant `value` inside the ball, zero outside.
class BallProvider final : public FieldProvider {
 public:
  BallProvider(Vec3 center, double radius, double value)
      : center_(std::move(center)), radius_(radius), value_(value) {}
  double density(const Vec3& x) const override {
    return (x - center_).norm() <= radius_ ? value_ : 0.0;
  }

 private:
  Vec3 center_;
  double radius_;
  double value_;
};

/// Constant `value` inside the axis-aligned box, zero outside.
class BoxProvider final : public FieldProvider {
 public:
  BoxProvider(Vec3 center, Vec3 half_extent, double value)
      : center_(std::move(center)), half_(std::move(half_extent)), value_(value) {}
  double density(const Vec3& x) const override {
    return ((x - center_).cwiseAbs().array() <= half_.array()).all() ? value_ : 0.0;
  }

 private:
  Vec3 center_;
  Vec3 half_;
  double value_;
};

using Sdf = std::function<double(const Vec3&)>;

/// sigma_max * sigmoid(-sdf(x) / width).
class SdfProvider final : public FieldProvider {
 public:
  SdfProvider(Sdf sdf, double sigma_max, double width)
      : sdf_(std::move(sdf)), sigma_max_(sigma_max), width_(width) {}
  double density(const Vec3& x) const override;
  const Sdf& sdf() const { return sdf_; }

 private:
  Sdf sdf_;
  double sigma_max_;
  double width_;
};

/// The base field rotated by R about `pivot`: sigma'(x) = sigma(pivot + Rᵀ(x - pivot)).
class RotatedProvider final : public FieldProvider {
 public:
  RotatedProvider(ProviderPtr base, Mat3 r, Vec3 pivot)
      : base_(std::move(base)), r_(std::move(r)), pivot_(std::move(pivot)) {}
  double density(const Vec3& x) const override;
  double normalized(const Vec3& x, double d) const override;
  std::optional<Vec3> density_gradient(const Vec3& x) const override;

 private:
  ProviderPtr base_;
  Mat3 r_;
  Vec3 pivot_;
};

/// sigma'(x) = sigma(x - t).
class TranslatedProvider final : public FieldProvider {
 public:
  TranslatedProvider(ProviderPtr base, Vec3 t) : base_(std::move(base)), t_(std::move(t)) {}
  double density(const Vec3& x) const override { return base_->density(x - t_); }
  double normalized(const Vec3& x, double d) const override { return base_->normalized(x - t_, d); }
  std::optional<Vec3> density_gradient(const Vec3& x) const override {
    return base_->density_gradient(x - t_);
  }

 private:
  ProviderPtr base_;
  Vec3 t_;
};

class SumProvider final : public FieldProvider {
 public:
  explicit SumProvider(std::vector<ProviderPtr> parts) : parts_(std::move(parts)) {}
  double density(const Vec3& x) const override;
  std::optional<Vec3> density_gradient(const Vec3& x) const override;

 private:
  std::vector<ProviderPtr> parts_;
};

/// Deterministic value noise: trilinear interpolation of hashed lattice
/// values in [0, 1] on a `cells`³ lattice over the unit cube, times amplitude.
class NoiseProvider final : public FieldProvider {
 public:
  NoiseProvider(std::uint64_t seed, double amplitude, int cells = 48)
      : seed_(seed), amplitude_(amplitude), cells_(cells) {}
  double density(const Vec3& x) const override;

 private:
  double lattice(long i, long j, long k) const;
  std::uint64_t seed_;
  double amplitude_;
  int cells_;
};

/// File-backed field. normalized() interpolates stored values trilinearly
/// (exact at lattice points); density() inverts the normalization with the
/// grid's depth step. Zero outside the lattice.
class GridProvider final : public FieldProvider {
 public:
  explicit GridProvider(DensityGrid grid, double depth_step = kDefaultDepthStep);
  double density(const Vec3& x) const override;
  double normalized(const Vec3& x, double d) const override;
  const DensityGrid& grid() const { return grid_; }

 private:
  double interpolate(const Vec3& x) const;
  DensityGrid grid_;
  double depth_step_;
};

}  // namespace cafield::field

namespace cafield::field {

/// Mean of the normalized density over the ball of radius r around x, by a
/// product rule (Gauss-Legendre in r³, Fibonacci directions).
double ball_average(const FieldProvider& p, const Vec3& x, double r, double d,
                    std::size_t radial = 12, std::size_t directions = 256);

}  // namespace cafield::field
