#pragma once

#include <cstddef>
#include <vector>

#include "cafield/ad/tensor.hpp"

namespace cafield::ad {

// Binary elementwise ops broadcast numpy-style: shapes are right-aligned and
// each extent must match or be 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);
/// Adjoint is 0 for inputs <= 0.
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
/// Adjoint at exactly 0 is taken as 0 (subgradient of the norm at the origin).
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// out[b,i,c] = sum_j m[i,j] x[b,j,c] for m of shape [I,J] and x of shape [B,J,C].
Tensor left_multiply(const Tensor& m, const Tensor& x);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Reductions drop the reduced axis.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);

struct MaxResult {
  Tensor values;
  std::vector<std::size_t> argmax;  // winner index along the reduced axis; ties -> lowest
};
MaxResult max(const Tensor& a, std::size_t axis);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
/// Selects entries along axis 0; backward scatters with accumulation.
Tensor gather(const Tensor& a, const std::vector<std::size_t>& indices);

/// Per-channel normalization with running statistics and learnable affine.
/// Running stats update as running <- momentum * running + (1 - momentum) * batch.
struct BatchNormState {
  explicit BatchNormState(std::size_t channels = 0, double momentum = 0.75, double eps = 1e-9);

  std::size_t channels;
  double momentum;
  double eps;
  bool enabled = true;  // false makes the op an identity
  std::vector<double> running_mean;
  std::vector<double> running_var;
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
};

/// x has shape [rows, C].
Tensor batch_norm(const Tensor& x, BatchNormState& state, bool training);

}  // namespace cafield::ad
