#include "cafield/so3/rotation.hpp"

#include <algorithm>
#include <cmath>

#include "cafield/error.hpp"

namespace cafield::so3 {

bool is_rotation(const Mat3& m, double tol) {
  if (!m.allFinite()) return false;
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

Rotation::Rotation(const Mat3& m, double tol) : m_(m) {
  if (!is_rotation(m, tol)) throw DomainError("matrix is not a rotation");
}

Rotation Rotation::axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw DomainError("rotation axis must be non-zero");
  return Rotation(Eigen::AngleAxisd(angle, axis / n).toRotationMatrix(), Unchecked{});
}

Rotation random_rotation(Rng& rng) {
  double w = 0, x = 0, y = 0, z = 0, n = 0;
  do {
    w = rng.normal();
    x = rng.normal();
    y = rng.normal();
    z = rng.normal();
    n = std::sqrt(w * w + x * x + y * y + z * z);
  } while (n < 1e-12);
  const Eigen::Quaterniond q(w / n, x / n, y / n, z / n);
  return Rotation(q.toRotationMatrix());
}

double angle_between(const Mat3& r1, const Mat3& r2) {
  const double c = std::clamp(((r1.transpose() * r2).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

Svd3 svd3(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

Mat3 nearest_rotation(const Mat3& m) {
  auto [u, s, v] = svd3(m);
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
  return u * v.transpose();
}

}  // namespace cafield::so3
