#pragma once

#include <Eigen/Dense>

#include "cafield/random.hpp"

namespace cafield::so3 {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

/// True when RᵀR = I and det R = +1, each within tol.
bool is_rotation(const Mat3& m, double tol = 1e-9);

/// A validated element of SO(3).
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}
  /// Throws DomainError unless m is a rotation within tol.
  explicit Rotation(const Mat3& m, double tol = 1e-9);

  static Rotation identity() { return Rotation(); }
  static Rotation axis_angle(const Vec3& axis, double angle);

  const Mat3& matrix() const { return m_; }
  Rotation inverse() const { return Rotation(m_.transpose(), Unchecked{}); }
  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_, Unchecked{}); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

 private:
  struct Unchecked {};
  Rotation(const Mat3& m, Unchecked) : m_(m) {}
  Mat3 m_;
};

/// Haar-uniform rotation from a normalized Gaussian quaternion.
Rotation random_rotation(Rng& rng);

/// Geodesic angle of R1ᵀR2 in radians.
double angle_between(const Mat3& r1, const Mat3& r2);

struct Svd3 {
  Mat3 U;
  Vec3 S;  // non-negative, descending
  Mat3 V;
};

/// M = U diag(S) Vᵀ.
Svd3 svd3(const Mat3& m);

/// Closest rotation U Vᵀ; when det(U Vᵀ) < 0 the last column of U is negated.
Mat3 nearest_rotation(const Mat3& m);

}  // namespace cafield::so3
