#include "cafield/so3/cg.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include <unsupported/Eigen/KroneckerProduct>

#include "cafield/error.hpp"
#include "cafield/so3/sh.hpp"
#include "cafield/so3/wigner.hpp"

namespace cafield::so3 {
namespace {

// Fixed generic rotations; two non-commuting ones already pin down the
// intertwiner, the third adds margin.
std::vector<Mat3> probe_rotations() {
  return {Rotation::axis_angle(Vec3(0.3, -0.5, 0.8), 0.9).matrix(),
          Rotation::axis_angle(Vec3(-0.7, 0.2, 0.4), 2.1).matrix(),
          Rotation::axis_angle(Vec3(0.1, 0.9, -0.3), -1.3).matrix()};
}

Eigen::MatrixXd build(int n, int l, int J) {
  const int dn = sh_dim(n), dl = sh_dim(l), dj = sh_dim(J);
  const int cols = dn * dl;
  const int unknowns = dj * cols;
  // vec(Q T) = (Tᵀ ⊗ I) vec(Q), vec(D Q) = (I ⊗ D) vec(Q) (column-major vec).
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(unknowns, unknowns);
  for (const auto& r : probe_rotations()) {
    const Eigen::MatrixXd t = Eigen::kroneckerProduct(wigner_d(n, r), wigner_d(l, r));
    const Eigen::MatrixXd dJ = wigner_d(J, r);
    const Eigen::MatrixXd a = Eigen::kroneckerProduct(t.transpose(), Eigen::MatrixXd::Identity(dj, dj)) -
                              Eigen::kroneckerProduct(Eigen::MatrixXd::Identity(cols, cols), dJ);
    normal.noalias() += a.transpose() * a;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
  const Eigen::VectorXd& evals = eig.eigenvalues();
  if (evals(0) > 1e-12 || (unknowns > 1 && evals(1) < 1e-6)) {
    throw NumericError("Clebsch-Gordan nullspace is not one-dimensional");
  }
  Eigen::MatrixXd q = Eigen::Map<const Eigen::MatrixXd>(eig.eigenvectors().col(0).data(), dj, cols);
  // Q Qᵀ is a multiple of the identity (Schur); scale it to exactly I.
  q /= std::sqrt((q * q.transpose()).trace() / dj);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    bool done = false;
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      if (std::abs(q(i, j)) > 1e-9) {
        if (q(i, j) < 0) q = -q;
        done = true;
        break;
      }
    }
    if (done) break;
  }
  return q;
}

struct Registry {
  std::mutex mu;
  std::map<std::tuple<int, int, int>, std::unique_ptr<Eigen::MatrixXd>> tables;
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

bool cg_admissible(int n, int l, int J) {
  return n >= 0 && l >= 0 && J >= 0 && J >= std::abs(n - l) && J <= n + l;
}

const Eigen::MatrixXd& cg_matrix(int n, int l, int J) {
  if (!cg_admissible(n, l, J)) {
    throw DomainError("inadmissible Clebsch-Gordan triple (" + std::to_string(n) + "," +
                      std::to_string(l) + ")->" + std::to_string(J));
  }
  if (n > kMaxDegree || l > kMaxDegree || J > kMaxDegree) {
    throw DomainError("Clebsch-Gordan degree above supported maximum");
  }
  auto& reg = registry();
  std::lock_guard lock(reg.mu);
  auto& slot = reg.tables[{n, l, J}];
  if (!slot) slot = std::make_unique<Eigen::MatrixXd>(build(n, l, J));
  return *slot;
}

Eigen::VectorXd cg_project(int n, int l, int J, const Eigen::VectorXd& a,
                           const Eigen::VectorXd& b) {
  const auto& q = cg_matrix(n, l, J);
  if (a.size() != sh_dim(n) || b.size() != sh_dim(l)) {
    throw DimensionError("cg_project operand sizes do not match degrees");
  }
  Eigen::VectorXd ab(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) ab.segment(i * b.size(), b.size()) = a(i) * b;
  return q * ab;
}

}  // namespace cafield::so3
