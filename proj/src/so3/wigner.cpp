#include "cafield/so3/wigner.hpp"

#include <array>
#include <atomic>
#include <mutex>

#include "cafield/error.hpp"
#include "cafield/so3/sh.hpp"

namespace cafield::so3 {
namespace {

constexpr std::size_t kFitDirections = 64;

std::atomic<bool> g_fault{false};

struct FitBasis {
  std::vector<Vec3> dirs;
  std::array<Eigen::MatrixXd, kMaxDegree + 1> pinv;  // (2l+1) x n
};

const FitBasis& fit_basis() {
  static const FitBasis basis = [] {
    FitBasis b;
    b.dirs = fibonacci_sphere(kFitDirections);
    for (int l = 0; l <= kMaxDegree; ++l) {
      b.pinv[static_cast<std::size_t>(l)] =
          eval_real_sh(l, b.dirs).completeOrthogonalDecomposition().pseudoInverse();
    }
    return b;
  }();
  return basis;
}

}  // namespace

Eigen::MatrixXd wigner_d(int l, const Mat3& r) {
  if (l < 0 || l > kMaxDegree) throw DomainError("Wigner degree out of range");
  if (!is_rotation(r)) throw DomainError("wigner_d needs a rotation matrix");
  if (l == 0) return Eigen::MatrixXd::Ones(1, 1);
  const auto& basis = fit_basis();
  std::vector<Vec3> rotated(basis.dirs.size());
  for (std::size_t i = 0; i < rotated.size(); ++i) rotated[i] = (r * basis.dirs[i]).normalized();
  // rows of B are Y(R x_i)ᵀ = Y(x_i)ᵀ Dᵀ, so Dᵀ = pinv(A) B.
  Eigen::MatrixXd d = (basis.pinv[static_cast<std::size_t>(l)] * eval_real_sh(l, rotated)).transpose();
  if (l == 1 && g_fault.load()) d.row(0) *= -1.0;
  return d;
}

Eigen::MatrixXd wigner_d_stack(int lmax, const Mat3& r) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(sh_count(lmax), sh_count(lmax));
  for (int l = 0; l <= lmax; ++l) {
    out.block(sh_offset(l), sh_offset(l), sh_dim(l), sh_dim(l)) = wigner_d(l, r);
  }
  return out;
}

namespace testing {
void inject_wigner_fault(bool on) { g_fault.store(on); }
bool wigner_fault_injected() { return g_fault.load(); }
}  // namespace testing

}  // namespace cafield::so3
