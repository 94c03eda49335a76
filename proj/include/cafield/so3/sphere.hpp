#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "cafield/so3/rotation.hpp"

namespace cafield::so3 {

/// Fixed point set on S² with transforms between samples and stacked
/// degree 0..lmax coefficients. inverse: samples = Y c, forward = pinv(Y).
class SphereSampling {
 public:
  /// Throws DegenerateInputError if the design matrix is rank deficient.
  SphereSampling(int lmax, std::size_t samples = 64);
  SphereSampling(int lmax, std::vector<Vec3> dirs);

  int lmax() const { return lmax_; }
  std::size_t samples() const { return dirs_.size(); }
  const std::vector<Vec3>& directions() const { return dirs_; }

  /// samples x coefficients
  const Eigen::MatrixXd& inverse_matrix() const { return inverse_; }
  /// coefficients x samples
  const Eigen::MatrixXd& forward_matrix() const { return forward_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& signal) const;
  Eigen::VectorXd inverse(const Eigen::VectorXd& coeffs) const;

 private:
  int lmax_;
  std::vector<Vec3> dirs_;
  Eigen::MatrixXd inverse_;
  Eigen::MatrixXd forward_;
};

}  // namespace cafield::so3
