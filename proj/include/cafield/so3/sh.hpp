#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "cafield/so3/rotation.hpp"

namespace cafield::so3 {

// Real spherical harmonics, orthonormal on the unit sphere, no Condon-Shortley
// phase. Within degree l the components are ordered m = -l..l, with
//   m > 0: sqrt(2) N_lm P_l^m(z) cos(m phi)
//   m < 0: sqrt(2) N_l|m| P_l^|m|(z) sin(|m| phi)
//   m = 0: N_l0 P_l(z)
// so degree 1 is sqrt(3/4pi) * (y, z, x): the type-1 basis is the Cartesian
// basis permuted as (x, y, z) -> (m=+1, m=-1, m=0).
// Degrees up to kMaxDegree are supported internally (Clebsch-Gordan
// completeness needs J up to 2 * L_max); networks use L_max <= 3.

inline constexpr int kMaxDegree = 6;

constexpr int sh_dim(int l) { return 2 * l + 1; }
/// Offset of degree l inside a stacked 0..L coefficient vector.
constexpr int sh_offset(int l) { return l * l; }
/// Total coefficient count for degrees 0..lmax.
constexpr int sh_count(int lmax) { return (lmax + 1) * (lmax + 1); }

/// Values at a unit direction; throws DomainError if |‖dir‖ - 1| > 1e-9.
Eigen::VectorXd eval_real_sh(int l, const Vec3& dir);
/// One row per direction.
Eigen::MatrixXd eval_real_sh(int l, const std::vector<Vec3>& dirs);
/// Stacked degrees 0..lmax.
Eigen::VectorXd eval_real_sh_all(int lmax, const Vec3& dir);

/// ‖x‖ Y^l(x/‖x‖); zero vector at the origin.
Eigen::VectorXd solid_sh(int l, const Vec3& x);

/// Maps a degree-1 coefficient vector (m=-1,0,1) to Cartesian (x,y,z), and back.
Vec3 type1_to_xyz(const Eigen::Ref<const Eigen::VectorXd>& c);
Eigen::Vector3d xyz_to_type1(const Vec3& v);
/// Permutation P with xyz = P * type1.
Mat3 type1_to_xyz_matrix();

/// Near-uniform Fibonacci point set on the unit sphere.
std::vector<Vec3> fibonacci_sphere(std::size_t n);

}  // namespace cafield::so3
