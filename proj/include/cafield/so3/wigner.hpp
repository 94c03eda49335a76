#pragma once

#include <Eigen/Dense>

#include "cafield/so3/rotation.hpp"

namespace cafield::so3 {

/// D^l(R) with Y^l(R x) = D^l(R) Y^l(x) in the real basis of sh.hpp.
/// Throws DomainError if r is not a rotation.
Eigen::MatrixXd wigner_d(int l, const Mat3& r);
inline Eigen::MatrixXd wigner_d(int l, const Rotation& r) { return wigner_d(l, r.matrix()); }

/// Block-diagonal D^0 ⊕ ... ⊕ D^lmax acting on stacked coefficients.
Eigen::MatrixXd wigner_d_stack(int lmax, const Mat3& r);

namespace testing {
/// Mutation hook: when set, the first row of D^1 is sign-flipped.
void inject_wigner_fault(bool on);
bool wigner_fault_injected();
}  // namespace testing

}  // namespace cafield::so3
