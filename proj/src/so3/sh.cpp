#include "cafield/so3/sh.hpp"

#include <cmath>
#include <numbers>

#include "cafield/error.hpp"

namespace cafield::so3 {
namespace {

double factorial_ratio(int a, int b) {
  // a! / b!
  double r = 1.0;
  for (int k = b + 1; k <= a; ++k) r *= k;
  for (int k = a + 1; k <= b; ++k) r /= k;
  return r;
}

void check_degree(int l) {
  if (l < 0 || l > kMaxDegree) {
    throw DomainError("spherical harmonic degree " + std::to_string(l) + " unsupported");
  }
}

/// Writes degree l at out[0..2l] for a unit vector (no validation).
void sh_unchecked(int l, const Vec3& d, double* out) {
  const double x = d.x(), y = d.y(), z = d.z();
  // Re/Im of (x + i y)^m
  double re = 1.0, im = 0.0;
  for (int m = 0; m <= l; ++m) {
    if (m > 0) {
      const double nre = re * x - im * y;
      im = re * y + im * x;
      re = nre;
    }
    // Q_l^m(z) = P_l^m(z) / (1 - z^2)^(m/2), upward in l.
    double q_mm = 1.0;
    for (int k = 1; k <= m; ++k) q_mm *= 2.0 * k - 1.0;
    double q = q_mm;
    if (l > m) {
      double q_prev = q_mm;
      double q_cur = z * (2.0 * m + 1.0) * q_mm;
      for (int k = m + 2; k <= l; ++k) {
        const double next = ((2.0 * k - 1.0) * z * q_cur - (k + m - 1.0) * q_prev) / (k - m);
        q_prev = q_cur;
        q_cur = next;
      }
      q = q_cur;
    }
    const double norm = std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) *
                                  factorial_ratio(l - m, l + m));
    if (m == 0) {
      out[l] = norm * q;
    } else {
      out[l + m] = std::numbers::sqrt2 * norm * q * re;
      out[l - m] = std::numbers::sqrt2 * norm * q * im;
    }
  }
}

void check_unit(const Vec3& d) {
  if (!d.allFinite() || std::abs(d.norm() - 1.0) > 1e-9) {
    throw DomainError("spherical harmonics need a unit direction");
  }
}

}  // namespace

Eigen::VectorXd eval_real_sh(int l, const Vec3& dir) {
  check_degree(l);
  check_unit(dir);
  Eigen::VectorXd out(sh_dim(l));
  sh_unchecked(l, dir, out.data());
  return out;
}

Eigen::MatrixXd eval_real_sh(int l, const std::vector<Vec3>& dirs) {
  check_degree(l);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(dirs.size()), sh_dim(l));
  Eigen::VectorXd row(sh_dim(l));
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    check_unit(dirs[i]);
    sh_unchecked(l, dirs[i], row.data());
    out.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return out;
}

Eigen::VectorXd eval_real_sh_all(int lmax, const Vec3& dir) {
  check_degree(lmax);
  check_unit(dir);
  Eigen::VectorXd out(sh_count(lmax));
  for (int l = 0; l <= lmax; ++l) sh_unchecked(l, dir, out.data() + sh_offset(l));
  return out;
}

Eigen::VectorXd solid_sh(int l, const Vec3& x) {
  check_degree(l);
  const double r = x.norm();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(sh_dim(l));
  if (r == 0.0) return out;
  sh_unchecked(l, x / r, out.data());
  return r * out;
}

Mat3 type1_to_xyz_matrix() {
  Mat3 p;
  // columns: m=-1 (y), m=0 (z), m=+1 (x)
  p << 0, 0, 1,
       1, 0, 0,
       0, 1, 0;
  return p;
}

Vec3 type1_to_xyz(const Eigen::Ref<const Eigen::VectorXd>& c) {
  return {c(2), c(0), c(1)};
}

Eigen::Vector3d xyz_to_type1(const Vec3& v) { return {v.y(), v.z(), v.x()}; }

std::vector<Vec3> fibonacci_sphere(std::size_t n) {
  std::vector<Vec3> pts(n);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    pts[i] = Vec3(r * std::cos(phi), r * std::sin(phi), z).normalized();
  }
  return pts;
}

}  // namespace cafield::so3
