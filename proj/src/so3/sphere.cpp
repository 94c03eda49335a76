#include "cafield/so3/sphere.hpp"

#include "cafield/error.hpp"
#include "cafield/so3/sh.hpp"

namespace cafield::so3 {

SphereSampling::SphereSampling(int lmax, std::size_t samples)
    : SphereSampling(lmax, fibonacci_sphere(samples)) {}

SphereSampling::SphereSampling(int lmax, std::vector<Vec3> dirs)
    : lmax_(lmax), dirs_(std::move(dirs)) {
  if (lmax < 0 || lmax > kMaxDegree) throw DomainError("sphere sampling degree out of range");
  const auto n = static_cast<Eigen::Index>(dirs_.size());
  inverse_.resize(n, sh_count(lmax));
  for (Eigen::Index i = 0; i < n; ++i) {
    inverse_.row(i) = eval_real_sh_all(lmax, dirs_[static_cast<std::size_t>(i)]).transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(inverse_);
  const auto& s = svd.singularValues();
  if (n < sh_count(lmax) || s(s.size() - 1) < 1e-8 * s(0)) {
    throw DegenerateInputError("sphere sampling cannot resolve degree " + std::to_string(lmax));
  }
  forward_ = inverse_.completeOrthogonalDecomposition().pseudoInverse();
}

Eigen::VectorXd SphereSampling::forward(const Eigen::VectorXd& signal) const {
  if (signal.size() != forward_.cols()) throw DimensionError("signal size mismatch");
  return forward_ * signal;
}

Eigen::VectorXd SphereSampling::inverse(const Eigen::VectorXd& coeffs) const {
  if (coeffs.size() != inverse_.cols()) throw DimensionError("coefficient size mismatch");
  return inverse_ * coeffs;
}

}  // namespace cafield::so3
