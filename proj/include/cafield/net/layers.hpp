#pragma once

#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include "cafield/ad/ops.hpp"
#include "cafield/net/geometry.hpp"
#include "cafield/so3/rotation.hpp"
#include "cafield/so3/sphere.hpp"

namespace cafield::net {

using ad::Tensor;
using GeometryPtr = std::shared_ptr<const ConvGeometry>;

// Feature maps are tensors [points, (lmax+1)², channels]; within the middle
// axis, degree l occupies rows l²..l²+2l in the order m = -l..l.

/// Admissible (kernel degree n, input degree l) pairs for each output degree J.
struct ConvPaths {
  int lmax_in = 0;
  int kernel_lmax = 0;
  int lmax_out = 0;
  std::vector<std::vector<std::pair<int, int>>> paths;  // indexed by J

  static ConvPaths make(int lmax_in, int kernel_lmax, int lmax_out);
};

/// TFN aggregation before channel mixing. Output [targets, width] where for
/// each J (ascending) a block of (2J+1) x paths(J) x shells x C values holds
///   mean_y Q^{(n,l),J}(kernel_{k,n}(y - p) ⊗ x^l[y, :, c]).
Tensor eqconv_raw(const Tensor& x, const GeometryPtr& geom, const ConvPaths& paths);

struct EqConvWeights {
  std::vector<Tensor> w;  // per J: [paths(J) * shells * C_in, C_out]
  Tensor bias;            // [C_out], type 0 only
};

/// f_w(p) (W^J raw^J(p) + δ_{J0} b), one weight per target.
Tensor eqconv_layer(const Tensor& x, const GeometryPtr& geom, const ConvPaths& paths,
                    const EqConvWeights& weights, const std::vector<double>& fw);

struct NonlinearityParams {
  ad::BatchNormState bn;
  Tensor w;  // [C, C]
  Tensor b;  // [C]
};

/// Per point: inverse SH transform to sphere samples, batch norm, ReLU,
/// channel MLP, forward SH transform.
Tensor equivariant_nonlinearity(const Tensor& x, const so3::SphereSampling& sampling,
                                NonlinearityParams& params, bool training);

struct PoolResult {
  Tensor pooled;                    // [(lmax+1)², C]
  std::vector<std::size_t> winner;  // per (l, c), row-major by l then c
};

/// For every (degree, channel) returns the block of the point with the
/// largest block norm; ties (relative 1e-12) go to the lowest point index.
PoolResult global_pool(const Tensor& x, int lmax);

/// Per query point: concat over l of <F^l[:, c], Z^l(X)> for every channel,
/// then a linear map. X must already be centered.
Tensor invariant_embedding(const Tensor& pooled, int lmax, const std::vector<Vec3>& x,
                           const Tensor& w, const Tensor& b);

/// Applies D^l(R) to every degree block of a [N, S, C] or [S, C] feature tensor.
std::vector<double> rotate_features(const Tensor& x, int lmax, const so3::Rotation& r);

}  // namespace cafield::net
