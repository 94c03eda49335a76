#pragma once

#include <Eigen/Dense>

namespace cafield::so3 {

/// True when |n - l| <= J <= n + l (all non-negative).
bool cg_admissible(int n, int l, int J);

/// Q^{(n,l),J}: a (2J+1) x ((2n+1)(2l+1)) matrix with orthonormal rows such
/// that Q (D^n(R) ⊗ D^l(R)) = D^J(R) Q. Column i*(2l+1)+j pairs a_i with b_j.
/// Sign fixed by making the first entry with |q| > 1e-9 (row-major) positive.
/// Tables are built on first use and cached; safe for concurrent reads.
const Eigen::MatrixXd& cg_matrix(int n, int l, int J);

/// Q^{(n,l),J}(a ⊗ b). Throws DomainError for an inadmissible triple.
Eigen::VectorXd cg_project(int n, int l, int J, const Eigen::VectorXd& a,
                           const Eigen::VectorXd& b);

}  // namespace cafield::so3
