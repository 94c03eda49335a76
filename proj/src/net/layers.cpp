#include "cafield/net/layers.hpp"

#include <cmath>

#include "cafield/error.hpp"
#include "cafield/parallel.hpp"
#include "cafield/so3/cg.hpp"
#include "cafield/so3/sh.hpp"
#include "cafield/so3/wigner.hpp"

namespace cafield::net {

ConvPaths ConvPaths::make(int lmax_in, int kernel_lmax, int lmax_out) {
  ConvPaths p;
  p.lmax_in = lmax_in;
  p.kernel_lmax = kernel_lmax;
  p.lmax_out = lmax_out;
  p.paths.resize(static_cast<std::size_t>(lmax_out + 1));
  for (int J = 0; J <= lmax_out; ++J)
    for (int n = 0; n <= kernel_lmax; ++n)
      for (int l = 0; l <= lmax_in; ++l)
        if (so3::cg_admissible(n, l, J)) p.paths[static_cast<std::size_t>(J)].emplace_back(n, l);
  return p;
}

namespace {

struct RawLayout {
  std::size_t channels = 0;
  std::size_t shells = 0;
  std::vector<std::size_t> offset;  // per J
  std::size_t width = 0;
};

RawLayout raw_layout(const ConvPaths& paths, std::size_t shells, std::size_t channels) {
  RawLayout r;
  r.channels = channels;
  r.shells = shells;
  for (int J = 0; J <= paths.lmax_out; ++J) {
    r.offset.push_back(r.width);
    r.width += static_cast<std::size_t>(2 * J + 1) * paths.paths[static_cast<std::size_t>(J)].size() *
               shells * channels;
  }
  return r;
}

// Walks every (J, M, path, shell, channel) entry of a target's raw row and
// the (kernel row, feature column) pairs that feed it through Q.
template <typename F>
void for_each_path(const ConvPaths& paths, const RawLayout& lay, int kernel_sh, int in_sh, F&& f) {
  const std::size_t C = lay.channels, K = lay.shells;
  for (int J = 0; J <= paths.lmax_out; ++J) {
    const auto& pj = paths.paths[static_cast<std::size_t>(J)];
    const std::size_t npaths = pj.size();
    for (std::size_t pi = 0; pi < npaths; ++pi) {
      const auto [n, l] = pj[pi];
      const auto& q = so3::cg_matrix(n, l, J);
      const int dn = 2 * n + 1, dl = 2 * l + 1;
      for (int M = 0; M < 2 * J + 1; ++M)
        for (int i = 0; i < dn; ++i)
          for (int j = 0; j < dl; ++j) {
            const double coef = q(M, i * dl + j);
            if (coef == 0.0) continue;
            for (std::size_t k = 0; k < K; ++k) {
              const std::size_t krow = k * static_cast<std::size_t>(kernel_sh) +
                                       static_cast<std::size_t>(n * n + i);
              const std::size_t fcol = static_cast<std::size_t>(l * l + j) * C;
              const std::size_t out = lay.offset[static_cast<std::size_t>(J)] +
                                      ((static_cast<std::size_t>(M) * npaths + pi) * K + k) * C;
              f(coef, krow, fcol, out);
            }
          }
    }
  }
  (void)in_sh;
}

}  // namespace

Tensor eqconv_raw(const Tensor& x, const GeometryPtr& geom_ptr, const ConvPaths& paths) {
  const ConvGeometry& geom = *geom_ptr;
  if (x.rank() != 3 || x.dim(0) != geom.sources ||
      x.dim(1) != static_cast<std::size_t>(so3::sh_count(paths.lmax_in))) {
    throw DimensionError("eqconv input " + ad::shape_string(x.shape()) +
                         " does not match geometry/paths");
  }
  if (geom.kernel_lmax != paths.kernel_lmax) throw DimensionError("kernel degree mismatch");
  const std::size_t C = x.dim(2);
  const std::size_t in_width = x.dim(1) * C;
  const std::size_t kw = geom.kernel_width();
  const int kernel_sh = so3::sh_count(geom.kernel_lmax);
  const int in_sh = so3::sh_count(paths.lmax_in);
  const RawLayout lay = raw_layout(paths, geom.shells, C);
  const std::size_t T = geom.targets;

  // Warm the Clebsch-Gordan cache before going parallel.
  for (int J = 0; J <= paths.lmax_out; ++J)
    for (auto [n, l] : paths.paths[static_cast<std::size_t>(J)]) so3::cg_matrix(n, l, J);

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto xv = x.values();
  std::vector<double> out(T * lay.width, 0.0);
  parallel_for(T, [&](std::size_t begin, std::size_t end) {
    RowMat G(kw, in_width), feats, kern;
    for (std::size_t t = begin; t < end; ++t) {
      const std::size_t p0 = geom.offsets[t], np = geom.offsets[t + 1] - p0;
      kern = Eigen::Map<const RowMat>(geom.kernel.data() + p0 * kw, np, kw);
      feats.resize(np, in_width);
      for (std::size_t a = 0; a < np; ++a) {
        feats.row(a) = Eigen::Map<const Eigen::RowVectorXd>(xv.data() + geom.neighbor[p0 + a] * in_width, in_width);
      }
      G.noalias() = kern.transpose() * feats;
      G /= static_cast<double>(np);
      double* row = out.data() + t * lay.width;
      for_each_path(paths, lay, kernel_sh, in_sh, [&](double coef, std::size_t kr, std::size_t fc, std::size_t o) {
        const double* g = G.data() + kr * in_width + fc;
        for (std::size_t c = 0; c < C; ++c) row[o + c] += coef * g[c];
      });
    }
  });

  return Tensor::from_op({T, lay.width}, std::move(out), {x}, [geom_ptr, paths, lay, kw, in_width, kernel_sh, in_sh, T](ad::Node& node) {
    const ConvGeometry& geom = *geom_ptr;
    ad::Node& px = *node.parents[0];
    const std::size_t C = lay.channels;
    // dL/dG per target, then scatter to sources through the reverse adjacency.
    std::vector<double> dG(T * kw * in_width, 0.0);
    parallel_for(T, [&](std::size_t begin, std::size_t end) {
      for (std::size_t t = begin; t < end; ++t) {
        const double* grow = node.grad.data() + t * lay.width;
        double* d = dG.data() + t * kw * in_width;
        const double inv = 1.0 / static_cast<double>(geom.offsets[t + 1] - geom.offsets[t]);
        for_each_path(paths, lay, kernel_sh, in_sh, [&](double coef, std::size_t kr, std::size_t fc, std::size_t o) {
          double* dd = d + kr * in_width + fc;
          for (std::size_t c = 0; c < C; ++c) dd[c] += inv * coef * grow[o + c];
        });
      }
    });
    // reverse adjacency: for each source, the pairs that reference it
    std::vector<std::size_t> count(geom.sources + 1, 0);
    for (auto s : geom.neighbor) ++count[s + 1];
    for (std::size_t s = 0; s < geom.sources; ++s) count[s + 1] += count[s];
    std::vector<std::size_t> pair_of(geom.pairs()), target_of(geom.pairs());
    {
      std::vector<std::size_t> fill(count.begin(), count.end() - 1);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t p = geom.offsets[t]; p < geom.offsets[t + 1]; ++p) {
          const std::size_t slot = fill[geom.neighbor[p]]++;
          pair_of[slot] = p;
          target_of[slot] = t;
        }
    }
    auto& gx = px.grad_buffer();
    parallel_for(geom.sources, [&](std::size_t begin, std::size_t end) {
      for (std::size_t s = begin; s < end; ++s) {
        double* gs = gx.data() + s * in_width;
        for (std::size_t slot = count[s]; slot < count[s + 1]; ++slot) {
          const double* kr = geom.kernel.data() + pair_of[slot] * kw;
          const double* d = dG.data() + target_of[slot] * kw * in_width;
          for (std::size_t a = 0; a < kw; ++a) {
            if (kr[a] == 0.0) continue;
            const double* da = d + a * in_width;
            for (std::size_t b = 0; b < in_width; ++b) gs[b] += kr[a] * da[b];
          }
        }
      }
    });
  });
}

Tensor eqconv_layer(const Tensor& x, const GeometryPtr& geom_ptr, const ConvPaths& paths,
                    const EqConvWeights& weights, const std::vector<double>& fw) {
  const ConvGeometry& geom = *geom_ptr;
  const std::size_t T = geom.targets;
  if (fw.size() != T) throw DimensionError("one density weight per target is required");
  if (weights.w.size() != static_cast<std::size_t>(paths.lmax_out + 1)) {
    throw DimensionError("one weight matrix per output degree is required");
  }
  const std::size_t C = x.dim(2);
  const std::size_t c_out = weights.bias.size();
  const Tensor raw = eqconv_raw(x, geom_ptr, paths);
  std::vector<Tensor> blocks;
  std::size_t offset = 0;
  for (int J = 0; J <= paths.lmax_out; ++J) {
    const std::size_t dJ = static_cast<std::size_t>(2 * J + 1);
    const std::size_t per = paths.paths[static_cast<std::size_t>(J)].size() * geom.shells * C;
    const Tensor& w = weights.w[static_cast<std::size_t>(J)];
    if (w.rank() != 2 || w.dim(0) != per || w.dim(1) != c_out) {
      throw DimensionError("EQConv weight for J=" + std::to_string(J) + " has shape " +
                           ad::shape_string(w.shape()));
    }
    Tensor block;
    if (per == 0) {
      block = Tensor::zeros({T, dJ, c_out});
    } else {
      Tensor r = ad::reshape(ad::slice(raw, 1, offset, dJ * per), {T * dJ, per});
      block = ad::reshape(ad::matmul(r, w), {T, dJ, c_out});
    }
    if (J == 0) block = ad::add(block, weights.bias);
    blocks.push_back(block);
    offset += dJ * per;
  }
  const Tensor out = ad::concat(blocks, 1);
  return ad::mul(out, Tensor({T, 1, 1}, fw));
}

Tensor equivariant_nonlinearity(const Tensor& x, const so3::SphereSampling& sampling,
                                NonlinearityParams& params, bool training) {
  const std::size_t N = x.dim(0), S = x.dim(1), C = x.dim(2);
  if (S != static_cast<std::size_t>(so3::sh_count(sampling.lmax()))) {
    throw DimensionError("nonlinearity degree does not match sphere sampling");
  }
  const std::size_t Q = sampling.samples();
  const auto& inv = sampling.inverse_matrix();
  const auto& fwd = sampling.forward_matrix();
  std::vector<double> iv(Q * S), fv(S * Q);
  for (std::size_t a = 0; a < Q; ++a)
    for (std::size_t b = 0; b < S; ++b) iv[a * S + b] = inv(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  for (std::size_t a = 0; a < S; ++a)
    for (std::size_t b = 0; b < Q; ++b) fv[a * Q + b] = fwd(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  const Tensor isht({Q, S}, std::move(iv));
  const Tensor fsht({S, Q}, std::move(fv));

  Tensor s = ad::reshape(ad::left_multiply(isht, x), {N * Q, C});
  s = ad::relu(ad::batch_norm(s, params.bn, training));
  s = ad::add(ad::matmul(s, params.w), params.b);
  return ad::left_multiply(fsht, ad::reshape(s, {N, Q, C}));
}

PoolResult global_pool(const Tensor& x, int lmax) {
  if (x.rank() != 3 || x.dim(1) != static_cast<std::size_t>(so3::sh_count(lmax))) {
    throw DimensionError("global_pool input shape " + ad::shape_string(x.shape()));
  }
  const std::size_t N = x.dim(0), S = x.dim(1), C = x.dim(2);
  if (N == 0) throw DegenerateInputError("global_pool over an empty point set");
  const auto v = x.values();
  PoolResult r;
  r.winner.assign(static_cast<std::size_t>(lmax + 1) * C, 0);
  std::vector<double> out(S * C);
  for (int l = 0; l <= lmax; ++l) {
    const std::size_t o = static_cast<std::size_t>(l * l), d = static_cast<std::size_t>(2 * l + 1);
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t best = 0;
      double best_norm = -1.0;
      for (std::size_t p = 0; p < N; ++p) {
        double n2 = 0.0;
        for (std::size_t m = 0; m < d; ++m) {
          const double e = v[(p * S + o + m) * C + c];
          n2 += e * e;
        }
        if (n2 > best_norm * (1.0 + 1e-12) + 1e-300) {
          best_norm = n2;
          best = p;
        }
      }
      r.winner[static_cast<std::size_t>(l) * C + c] = best;
      for (std::size_t m = 0; m < d; ++m) out[(o + m) * C + c] = v[(best * S + o + m) * C + c];
    }
  }
  const auto winner = r.winner;
  r.pooled = Tensor::from_op({S, C}, std::move(out), {x}, [winner, lmax, S, C](ad::Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (int l = 0; l <= lmax; ++l) {
      const std::size_t o = static_cast<std::size_t>(l * l), d = static_cast<std::size_t>(2 * l + 1);
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t p = winner[static_cast<std::size_t>(l) * C + c];
        for (std::size_t m = 0; m < d; ++m) g[(p * S + o + m) * C + c] += n.grad[(o + m) * C + c];
      }
    }
  });
  return r;
}

Tensor invariant_embedding(const Tensor& pooled, int lmax, const std::vector<Vec3>& x,
                           const Tensor& w, const Tensor& b) {
  const std::size_t N = x.size();
  std::vector<Tensor> parts;
  for (int l = 0; l <= lmax; ++l) {
    const std::size_t d = static_cast<std::size_t>(2 * l + 1);
    std::vector<double> z(N * d);
    for (std::size_t p = 0; p < N; ++p) {
      const Eigen::VectorXd zl = so3::solid_sh(l, x[p]);
      for (std::size_t m = 0; m < d; ++m) z[p * d + m] = zl(static_cast<Eigen::Index>(m));
    }
    const Tensor f = ad::slice(pooled, 0, static_cast<std::size_t>(l * l), d);
    parts.push_back(ad::matmul(Tensor({N, d}, std::move(z)), f));
  }
  return ad::add(ad::matmul(ad::concat(parts, 1), w), b);
}

std::vector<double> rotate_features(const Tensor& x, int lmax, const so3::Rotation& r) {
  const bool batched = x.rank() == 3;
  if (!batched && x.rank() != 2) throw DimensionError("rotate_features expects rank 2 or 3");
  const std::size_t n = batched ? x.dim(0) : 1;
  const std::size_t S = batched ? x.dim(1) : x.dim(0);
  const std::size_t C = batched ? x.dim(2) : x.dim(1);
  if (S != static_cast<std::size_t>(so3::sh_count(lmax))) throw DimensionError("feature degree mismatch");
  std::vector<double> out(x.values().begin(), x.values().end());
  for (int l = 0; l <= lmax; ++l) {
    const Eigen::MatrixXd d = so3::wigner_d(l, r);
    const std::size_t o = static_cast<std::size_t>(l * l), dl = static_cast<std::size_t>(2 * l + 1);
    Eigen::VectorXd v(static_cast<Eigen::Index>(dl));
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t m = 0; m < dl; ++m) v(static_cast<Eigen::Index>(m)) = x[(p * S + o + m) * C + c];
        const Eigen::VectorXd w = d * v;
        for (std::size_t m = 0; m < dl; ++m) out[(p * S + o + m) * C + c] = w(static_cast<Eigen::Index>(m));
      }
  }
  return out;
}

}  // namespace cafield::net
