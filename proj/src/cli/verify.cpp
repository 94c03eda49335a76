#include "cafield/cli/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>
#include <span>

#include "cafield/ad/gradcheck.hpp"
#include "cafield/ad/ops.hpp"
#include "cafield/canon/canon.hpp"
#include "cafield/error.hpp"
#include "cafield/field/preprocess.hpp"
#include "cafield/field/provider.hpp"
#include "cafield/field/synth.hpp"
#include "cafield/net/input.hpp"
#include "cafield/net/layers.hpp"
#include "cafield/net/model.hpp"
#include "cafield/random.hpp"
#include "cafield/so3/cg.hpp"
#include "cafield/so3/rotation.hpp"
#include "cafield/so3/sh.hpp"
#include "cafield/so3/wigner.hpp"

namespace cafield::cli {

namespace {

using ad::Tensor;
using Eigen::MatrixXd;
using so3::Mat3;
using so3::Vec3;

constexpr double kGradTol = 1e-4;

CheckResult upper(std::string group, std::string name, double residual, double tol) {
  return {std::move(group), std::move(name), residual, tol, residual <= tol};
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double max_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double relative(std::span<const double> got, std::span<const double> want) {
  const double scale = max_abs(want);
  return max_diff(got, want) / (scale > 0.0 ? scale : 1.0);
}

Vec3 random_unit(Rng& rng) {
  Vec3 v(rng.normal(), rng.normal(), rng.normal());
  return v.normalized();
}

MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return k;
}

Tensor random_tensor(Rng& rng, ad::Shape shape, double scale = 1.0, bool grad = true) {
  std::vector<double> v(ad::shape_size(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor(std::move(shape), std::move(v), grad);
}

/// Entries bounded away from zero, for ops with a kink or singularity there.
Tensor away_from_zero(Rng& rng, ad::Shape shape, bool positive, bool grad = true) {
  std::vector<double> v(ad::shape_size(shape));
  for (auto& x : v) {
    x = rng.uniform(0.2, 1.5);
    if (!positive && rng.uniform() < 0.5) x = -x;
  }
  return Tensor(std::move(shape), std::move(v), grad);
}

Tensor points_tensor(const std::vector<Vec3>& v, bool grad = false) {
  std::vector<double> d;
  d.reserve(v.size() * 3);
  for (const auto& p : v) d.insert(d.end(), {p.x(), p.y(), p.z()});
  return Tensor({v.size(), 3}, std::move(d), grad);
}

std::vector<Vec3> tensor_points(const Tensor& t) {
  std::vector<Vec3> v(t.dim(0));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = Vec3(t[i * 3], t[i * 3 + 1], t[i * 3 + 2]);
  return v;
}

Mat3 tensor_mat(const Tensor& t) {
  Mat3 m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = t[static_cast<std::size_t>(i * 3 + j)];
  return m;
}

Tensor mat_tensor(const Mat3& m, bool grad = false) {
  std::vector<double> d;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) d.push_back(m(i, j));
  return Tensor({3, 3}, std::move(d), grad);
}

CheckResult gradcheck_result(const std::string& name, const ad::ScalarFn& f,
                             const std::vector<Tensor>& inputs) {
  const auto report = ad::gradcheck(f, inputs, kGradTol);
  return {"autodiff", name, report.max_rel_error, kGradTol, report.passed};
}

std::shared_ptr<field::GaussianBlobs> lemma_blobs() {
  return std::make_shared<field::GaussianBlobs>(std::vector<field::GaussianBlob>{
      {Vec3(0.42, 0.5, 0.55), 50.0, 0.12}, {Vec3(0.6, 0.44, 0.48), 35.0, 0.15}});
}

}  // namespace

std::vector<CheckResult> check_sh_wigner(const VerifyOptions& opt) {
  Rng rng(mix_seed(opt.seed, 1));
  std::vector<CheckResult> out;
  const Mat3 t = so3::type1_to_xyz_matrix();
  double d1_worst = 0.0;
  for (int l = 0; l <= 3; ++l) {
    double sh_worst = 0.0, hom_worst = 0.0, orth_worst = 0.0;
    for (int s = 0; s < 100; ++s) {
      const so3::Rotation r = so3::random_rotation(rng);
      const so3::Rotation r2 = so3::random_rotation(rng);
      const Vec3 x = random_unit(rng);
      const MatrixXd d = so3::wigner_d(l, r);
      sh_worst = std::max(sh_worst,
                          (so3::eval_real_sh(l, Vec3(r * x)) - d * so3::eval_real_sh(l, x))
                              .cwiseAbs()
                              .maxCoeff());
      hom_worst = std::max(
          hom_worst, (so3::wigner_d(l, r * r2) - d * so3::wigner_d(l, r2)).cwiseAbs().maxCoeff());
      orth_worst = std::max(
          orth_worst,
          (d * d.transpose() - MatrixXd::Identity(d.rows(), d.cols())).cwiseAbs().maxCoeff());
      if (l == 1) {
        const MatrixXd expected = t.inverse() * r.matrix() * t;
        d1_worst = std::max(d1_worst, (d - expected).cwiseAbs().maxCoeff());
      }
    }
    const std::string deg = "l" + std::to_string(l);
    out.push_back(upper("sh_wigner", "sh_rotation_" + deg, sh_worst, 1e-9));
    out.push_back(upper("sh_wigner", "homomorphism_" + deg, hom_worst, 1e-8));
    out.push_back(upper("sh_wigner", "orthogonal_" + deg, orth_worst, 1e-9));
  }
  out.push_back(upper("sh_wigner", "d1_matches_rotation", d1_worst, 1e-9));
  return out;
}

std::vector<CheckResult> check_cg(const VerifyOptions& opt) {
  Rng rng(mix_seed(opt.seed, 2));
  std::vector<so3::Rotation> rots;
  for (int s = 0; s < 10; ++s) rots.push_back(so3::random_rotation(rng));
  double equi = 0.0, rows = 0.0, complete = 0.0;
  for (int n = 0; n <= 3; ++n)
    for (int l = 0; l <= 3; ++l) {
      const Eigen::Index dim = (2 * n + 1) * (2 * l + 1);
      MatrixXd stacked(0, dim);
      for (int j = std::abs(n - l); j <= n + l; ++j) {
        const MatrixXd& q = so3::cg_matrix(n, l, j);
        rows = std::max(rows, (q * q.transpose() - MatrixXd::Identity(q.rows(), q.rows()))
                                  .cwiseAbs()
                                  .maxCoeff());
        for (const auto& r : rots) {
          const MatrixXd lhs = q * kron(so3::wigner_d(n, r), so3::wigner_d(l, r));
          equi = std::max(equi, (lhs - so3::wigner_d(j, r) * q).cwiseAbs().maxCoeff());
        }
        MatrixXd grown(stacked.rows() + q.rows(), dim);
        grown << stacked, q;
        stacked = std::move(grown);
      }
      if (stacked.rows() != dim) {
        complete = std::numeric_limits<double>::infinity();
        continue;
      }
      complete = std::max(
          complete, (stacked.transpose() * stacked - MatrixXd::Identity(dim, dim)).cwiseAbs().maxCoeff());
    }
  return {upper("cg", "intertwining", equi, 1e-8), upper("cg", "orthonormal_rows", rows, 1e-9),
          upper("cg", "completeness", complete, 1e-9)};
}

std::vector<CheckResult> check_lemmas(const VerifyOptions& opt) {
  Rng rng(mix_seed(opt.seed, 3));
  const auto base = lemma_blobs();
  const Vec3 pivot(0.5, 0.5, 0.5);
  const double d = field::kDefaultDepthStep;
  double avg = 0.0, scaling = 0.0, grad = 0.0;
  for (int t = 0; t < 10; ++t) {
    const so3::Rotation r = so3::random_rotation(rng);
    const field::RotatedProvider rotated(base, r.matrix(), pivot);
    for (int s = 0; s < 5; ++s) {
      const Vec3 x(rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7));
      const Vec3 y = pivot + r.matrix() * (x - pivot);
      avg = std::max(avg, std::abs(field::ball_average(rotated, y, 0.06, d) -
                                   field::ball_average(*base, x, 0.06, d)));
      const Vec3 gy = *field::normalized_gradient(rotated, y, d);
      const Vec3 gx = *field::normalized_gradient(*base, x, d);
      grad = std::max(grad, (gy - r.matrix() * gx).norm());
      scaling = std::max(scaling, (rotated.normalized(y, d) * gy -
                                   r.matrix() * (base->normalized(x, d) * gx))
                                      .norm());
    }
  }

  // Finite differences on a lattice resampled from the rotated field.
  const std::size_t n = 33;
  const so3::Rotation r = so3::random_rotation(rng);
  const field::SceneBounds bounds{pivot, 1.0, 1};
  const auto g = field::resample_object_grid(*base, bounds, n, d, r.matrix());
  const auto fd = field::finite_gradient(g);
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i)
    for (std::size_t j = 1; j + 1 < n; ++j)
      for (std::size_t k = 1; k + 1 < n; ++k) {
        const std::size_t f = g.index(i, j, k);
        const Vec3 y = g.position(f);
        const Vec3 x = pivot + r.matrix().transpose() * (y - pivot);
        const Vec3 want = r.matrix() * *field::normalized_gradient(*base, x, d);
        worst = std::max(worst, (fd[f] - want).norm());
        scale = std::max(scale, want.norm());
      }
  const double h = g.spacing()[0];
  double sigma = std::numeric_limits<double>::infinity();
  for (const auto& b : base->blobs()) sigma = std::min(sigma, b.sigma);

  return {upper("lemmas", "local_average", avg, 1e-4),
          upper("lemmas", "density_scaling", scaling, 1e-6),
          upper("lemmas", "gradient_analytic", grad, 1e-6),
          upper("lemmas", "gradient_discrete", worst / scale, 5.0 * (h / sigma) * (h / sigma))};
}

std::vector<CheckResult> check_layers(const VerifyOptions& opt) {
  const int lmax = opt.lmax;
  net::ModelConfig cfg;
  cfg.lmax = lmax;
  const auto synth = field::synth_generate("wedge", mix_seed(opt.seed, 4));
  const auto grid =
      field::resample_object_grid(*synth.provider, field::scene_probe(*synth.provider), opt.grid);
  const auto mask = canon::foreground_cluster(grid, opt.seed);
  const net::NetInput input = net::build_net_input(grid, cfg, mask.cells);
  net::Model model(cfg, mix_seed(opt.seed, 5));

  // Batch-norm running statistics warmed on the unrotated input, then frozen.
  for (int w = 0; w < 20; ++w) model.forward(input, {.training = true});
  const net::ModelOutputs full = model.forward(input);
  const net::ModelOutputs linear = model.forward(input, {.nonlinearity = false});

  auto& params = model.params();
  const Tensor conv0 = net::eqconv_layer(input.signal, input.geometry[0], model.paths(0),
                                         params.conv[0], input.levels[1].weight);
  Rng rng(mix_seed(opt.seed, 6));
  const std::size_t width = static_cast<std::size_t>(so3::sh_count(lmax));
  const Tensor deep_in = random_tensor(rng, {input.levels[1].positions.size(), width, cfg.channels[0]},
                                       1.0, false);
  const Tensor deep = net::eqconv_layer(deep_in, input.geometry[1], model.paths(1), params.conv[1],
                                        input.levels[2].weight);
  const Tensor& feat = full.features.back();
  const net::PoolResult pool = net::global_pool(feat, lmax);

  double r_conv = 0, r_deep = 0, r_lin = 0, r_stack = 0, r_pool = 0, r_e = 0;
  double r_h = 0, r_p = 0, r_h_full = 0, r_p_full = 0;
  for (std::size_t t = 0; t < opt.rotations; ++t) {
    const so3::Rotation r = so3::random_rotation(rng);
    const net::NetInput rin = net::rotate_input(input, r, cfg);

    const Tensor rc = net::eqconv_layer(rin.signal, rin.geometry[0], model.paths(0), params.conv[0],
                                        rin.levels[1].weight);
    r_conv = std::max(r_conv, relative(rc.values(), net::rotate_features(conv0, lmax, r)));
    const Tensor rdin(deep_in.shape(), net::rotate_features(deep_in, lmax, r));
    const Tensor rd = net::eqconv_layer(rdin, rin.geometry[1], model.paths(1), params.conv[1],
                                        rin.levels[2].weight);
    r_deep = std::max(r_deep, relative(rd.values(), net::rotate_features(deep, lmax, r)));

    const net::ModelOutputs rlin = model.forward(rin, {.nonlinearity = false});
    r_lin = std::max(r_lin, relative(rlin.features.back().values(),
                                     net::rotate_features(linear.features.back(), lmax, r)));
    r_h = std::max(r_h, relative(rlin.h.values(), linear.h.values()));
    r_p = std::max(r_p, relative(rlin.p.values(), linear.p.values()));

    const net::ModelOutputs rfull = model.forward(rin);
    r_stack = std::max(r_stack, relative(rfull.features.back().values(),
                                         net::rotate_features(feat, lmax, r)));
    r_h_full = std::max(r_h_full, relative(rfull.h.values(), full.h.values()));
    r_p_full = std::max(r_p_full, relative(rfull.p.values(), full.p.values()));

    const Tensor rfeat(feat.shape(), net::rotate_features(feat, lmax, r));
    const Tensor rpool = net::global_pool(rfeat, lmax).pooled;
    r_pool = std::max(r_pool, relative(rpool.values(), net::rotate_features(pool.pooled, lmax, r)));

    const auto e = net::head_e(pool.pooled, params.head_e, cfg.candidates);
    const auto re = net::head_e(rpool, params.head_e, cfg.candidates);
    for (std::size_t j = 0; j < e.size(); ++j) {
      const Mat3 want = r.matrix() * tensor_mat(e[j]);
      const Mat3 got = tensor_mat(re[j]);
      const double s = want.cwiseAbs().maxCoeff();
      r_e = std::max(r_e, (got - want).cwiseAbs().maxCoeff() / (s > 0 ? s : 1.0));
    }
  }
  return {upper("layers", "eqconv_input_block", r_conv, 1e-6),
          upper("layers", "eqconv_full_degree", r_deep, 1e-6),
          upper("layers", "linear_stack", r_lin, 1e-5),
          upper("layers", "nonlinear_stack", r_stack, 2e-4),
          upper("layers", "global_pool", r_pool, 1e-6),
          upper("layers", "head_e", r_e, 1e-5),
          upper("layers", "h_invariance", r_h_full, 1e-5),
          upper("layers", "p_invariance", r_p_full, 1e-4),
          upper("layers", "h_invariance_linear", r_h, 1e-5),
          upper("layers", "p_invariance_linear", r_p, 1e-4)};
}

namespace {

/// Twenty scattered points split into four nested levels.
net::NetInput toy_input(Rng& rng, const net::ModelConfig& cfg) {
  net::NetInput in;
  const std::size_t counts[net::kLevels] = {20, 10, 5, 3};
  const double spacing[net::kLevels] = {0.35, 0.5, 0.7, 0.9};
  std::vector<Vec3> pts;
  for (int i = 0; i < 20; ++i)
    pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  for (std::size_t k = 0; k < net::kLevels; ++k) {
    net::NetLevel level;
    for (std::size_t p = 0; p < counts[k]; ++p) {
      level.positions.push_back(pts[p]);
      level.cells.push_back(p);
      level.weight.push_back(rng.uniform(0.3, 1.0));
    }
    level.spacing = spacing[k];
    in.levels.push_back(std::move(level));
  }
  std::vector<double> sig(20 * 4);
  for (auto& v : sig) v = rng.normal();
  in.signal = Tensor({20, 4, 1}, std::move(sig));
  in.query = pts;
  net::build_geometry(in, cfg);
  return in;
}

}  // namespace

std::vector<CheckResult> check_autodiff(const VerifyOptions& opt) {
  Rng rng(mix_seed(opt.seed, 7));
  std::vector<CheckResult> out;
  auto unary = [&](const std::string& name, Tensor x, auto op) {
    const Tensor c = random_tensor(rng, op(x.detach()).shape(), 1.0, false);
    out.push_back(gradcheck_result(
        name, [&](const std::vector<Tensor>&) { return ad::sum(ad::mul(op(x), c)); }, {x}));
  };
  auto binary = [&](const std::string& name, Tensor a, Tensor b, auto op) {
    const Tensor c = random_tensor(rng, op(a.detach(), b.detach()).shape(), 1.0, false);
    out.push_back(gradcheck_result(
        name, [&](const std::vector<Tensor>&) { return ad::sum(ad::mul(op(a, b), c)); }, {a, b}));
  };

  binary("add_broadcast", random_tensor(rng, {3, 4}), random_tensor(rng, {4}),
         [](const Tensor& a, const Tensor& b) { return ad::add(a, b); });
  binary("sub_broadcast", random_tensor(rng, {2, 3, 4}), random_tensor(rng, {3, 1}),
         [](const Tensor& a, const Tensor& b) { return ad::sub(a, b); });
  binary("mul_broadcast", random_tensor(rng, {3, 4}), random_tensor(rng, {3, 1}),
         [](const Tensor& a, const Tensor& b) { return ad::mul(a, b); });
  binary("matmul", random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2}),
         [](const Tensor& a, const Tensor& b) { return ad::matmul(a, b); });
  binary("left_multiply", random_tensor(rng, {3, 4}), random_tensor(rng, {2, 4, 5}),
         [](const Tensor& a, const Tensor& b) { return ad::left_multiply(a, b); });
  binary("concat", random_tensor(rng, {2, 3}), random_tensor(rng, {2, 2}),
         [](const Tensor& a, const Tensor& b) { return ad::concat({a, b}, 1); });

  unary("scale", random_tensor(rng, {5}), [](const Tensor& x) { return ad::scale(x, -1.7); });
  unary("neg", random_tensor(rng, {5}), [](const Tensor& x) { return ad::neg(x); });
  unary("relu", away_from_zero(rng, {12}, false), [](const Tensor& x) { return ad::relu(x); });
  unary("exp", random_tensor(rng, {6}), [](const Tensor& x) { return ad::exp(x); });
  unary("sqrt", away_from_zero(rng, {6}, true), [](const Tensor& x) { return ad::sqrt(x); });
  unary("square", random_tensor(rng, {6}), [](const Tensor& x) { return ad::square(x); });
  unary("transpose", random_tensor(rng, {3, 4}), [](const Tensor& x) { return ad::transpose(x); });
  unary("sum_all", random_tensor(rng, {3, 4}),
        [](const Tensor& x) { return ad::scale(ad::sum(x), 1.0); });
  unary("mean_all", random_tensor(rng, {3, 4}),
        [](const Tensor& x) { return ad::scale(ad::mean(x), 1.0); });
  unary("sum_axis", random_tensor(rng, {3, 4, 2}), [](const Tensor& x) { return ad::sum(x, 1); });
  unary("mean_axis", random_tensor(rng, {3, 4, 2}), [](const Tensor& x) { return ad::mean(x, 2); });
  unary("max_axis", random_tensor(rng, {4, 5}), [](const Tensor& x) { return ad::max(x, 0).values; });
  unary("reshape", random_tensor(rng, {3, 4}), [](const Tensor& x) { return ad::reshape(x, {2, 6}); });
  unary("slice", random_tensor(rng, {3, 5}), [](const Tensor& x) { return ad::slice(x, 1, 1, 3); });
  unary("gather", random_tensor(rng, {4, 3}),
        [](const Tensor& x) { return ad::gather(x, {2, 0, 2, 3}); });
  {
    ad::BatchNormState bn(3);
    bn.gamma = random_tensor(rng, {3});
    bn.beta = random_tensor(rng, {3});
    const Tensor x = random_tensor(rng, {8, 3});
    const Tensor c = random_tensor(rng, {8, 3}, 1.0, false);
    out.push_back(gradcheck_result(
        "batch_norm",
        [&](const std::vector<Tensor>&) { return ad::sum(ad::mul(ad::batch_norm(x, bn, true), c)); },
        {x, bn.gamma, bn.beta}));
  }

  net::ModelConfig cfg;
  cfg.lmax = 2;
  cfg.channels = {3, 3, 3};
  cfg.embed = 8;
  cfg.candidates = 2;
  Rng toy_rng(mix_seed(opt.seed, 10));
  const net::NetInput toy = toy_input(toy_rng, cfg);
  net::Model model(cfg, mix_seed(opt.seed, 8));
  auto& p = model.params();
  const so3::SphereSampling sampling(2, cfg.sphere_samples);

  {
    const Tensor x = random_tensor(rng, {20, 4, 1});
    const Tensor c = random_tensor(rng, {10, 9, 3}, 1.0, false);
    std::vector<Tensor> in{x, p.conv[0].bias};
    for (const auto& w : p.conv[0].w) in.push_back(w);
    out.push_back(gradcheck_result(
        "eqconv",
        [&](const std::vector<Tensor>&) {
          return ad::sum(ad::mul(
              net::eqconv_layer(x, toy.geometry[0], model.paths(0), p.conv[0], toy.levels[1].weight), c));
        },
        in));
  }
  {
    const Tensor x = random_tensor(rng, {6, 9, 3});
    const Tensor c = random_tensor(rng, {6, 9, 3}, 1.0, false);
    auto& nl = p.nonlinearity[0];
    out.push_back(gradcheck_result(
        "nonlinearity",
        [&](const std::vector<Tensor>&) {
          return ad::sum(ad::mul(net::equivariant_nonlinearity(x, sampling, nl, true), c));
        },
        {x, nl.w, nl.b, nl.bn.gamma, nl.bn.beta}));
  }
  unary("global_pool", random_tensor(rng, {7, 9, 3}),
        [](const Tensor& x) { return net::global_pool(x, 2).pooled; });
  {
    const Tensor pooled = random_tensor(rng, {9, 3});
    const Tensor c = random_tensor(rng, {20, 8}, 1.0, false);
    out.push_back(gradcheck_result(
        "invariant_embedding",
        [&](const std::vector<Tensor>&) {
          return ad::sum(ad::mul(net::invariant_embedding(pooled, 2, toy.query, p.embed_w, p.embed_b), c));
        },
        {pooled, p.embed_w, p.embed_b}));
  }
  {
    const Tensor h = random_tensor(rng, {20, 8});
    const Tensor c = random_tensor(rng, {20, 3}, 1.0, false);
    auto& hp = p.head_p;
    out.push_back(gradcheck_result(
        "head_p",
        [&](const std::vector<Tensor>&) { return ad::sum(ad::mul(net::head_p(h, hp, true), c)); },
        {h, hp.w1, hp.b1, hp.w2, hp.b2, hp.w3, hp.b3, hp.bn1.gamma, hp.bn1.beta, hp.bn2.gamma,
         hp.bn2.beta}));
  }
  {
    const Tensor pooled = random_tensor(rng, {9, 3});
    const Tensor c = random_tensor(rng, {3, 3}, 1.0, false);
    out.push_back(gradcheck_result(
        "head_e",
        [&](const std::vector<Tensor>&) {
          Tensor s = Tensor::scalar(0.0);
          for (const auto& e : net::head_e(pooled, p.head_e, 2)) s = ad::add(s, ad::sum(ad::mul(e, c)));
          return s;
        },
        {pooled, p.head_e}));
  }
  {
    std::vector<Vec3> xs, ps;
    for (int i = 0; i < 20; ++i) {
      xs.emplace_back(rng.normal(), rng.normal(), rng.normal());
      ps.emplace_back(rng.normal(), rng.normal(), rng.normal());
    }
    const Tensor x = points_tensor(xs), pt = points_tensor(ps, true), pt2 = points_tensor(xs, true);
    const Tensor e = random_tensor(rng, {3, 3});
    out.push_back(gradcheck_result(
        "loss_canon", [&](const std::vector<Tensor>&) { return canon::loss_canon(x, pt, e); },
        {pt, e}));
    std::vector<Tensor> es{random_tensor(rng, {3, 3}), random_tensor(rng, {3, 3})};
    out.push_back(gradcheck_result(
        "loss_ortho", [&](const std::vector<Tensor>&) { return canon::loss_ortho(es); }, es));
    out.push_back(gradcheck_result(
        "loss_siamese", [&](const std::vector<Tensor>&) { return canon::loss_siamese(pt, pt2); },
        {pt, pt2}));
  }

  // Full training objective of one Siamese pair on the toy field.
  {
    net::NetInput second = toy;
    std::vector<double> sig(second.signal.values().begin(), second.signal.values().end());
    for (auto& v : sig) v += 0.3 * rng.normal();
    second.signal = Tensor(second.signal.shape(), std::move(sig));
    const Tensor x = points_tensor(toy.levels[0].positions);
    auto objective = [&](const std::vector<Tensor>&) {
      std::vector<net::ModelOutputs> outs{model.forward(toy, {.training = true}),
                                          model.forward(second, {.training = true})};
      Tensor canon_sum = Tensor::scalar(0.0), ortho_sum = Tensor::scalar(0.0);
      for (const auto& o : outs) {
        std::vector<Mat3> cands;
        for (const auto& e : o.e) cands.push_back(tensor_mat(e));
        const auto sel =
            canon::select_best_transform(toy.levels[0].positions, tensor_points(o.p), cands);
        canon_sum = ad::add(canon_sum, canon::loss_canon(x, o.p, o.e[sel.index]));
        ortho_sum = ad::add(ortho_sum, canon::loss_ortho(o.e));
      }
      return canon::total_loss(ad::scale(canon_sum, 0.5), ad::scale(ortho_sum, 0.5),
                               canon::loss_siamese(outs[0].p, outs[1].p));
    };
    const auto report = ad::gradcheck_piecewise(objective, model.parameters(), kGradTol);
    out.push_back({"autodiff", "full_loss_graph", report.max_rel_error, kGradTol, report.passed});
  }
  return out;
}

std::vector<CheckResult> check_losses(const VerifyOptions& opt) {
  Rng rng(mix_seed(opt.seed, 9));
  double canon_exact = 0.0, ortho_zero = 0.0;
  double ortho_min = std::numeric_limits<double>::infinity();
  const double eps = 1e-3;
  for (int t = 0; t < 50; ++t) {
    const Mat3 e = so3::random_rotation(rng).matrix() * rng.uniform(0.5, 2.0);
    std::vector<Vec3> p(64), x(64);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = Vec3(rng.normal(), rng.normal(), rng.normal());
      x[i] = e * p[i];
    }
    canon_exact = std::max(
        canon_exact, canon::loss_canon(points_tensor(x), points_tensor(p), mat_tensor(e)).item());

    std::vector<Tensor> rots, perturbed;
    for (int j = 0; j < 4; ++j) {
      const Mat3 r = so3::random_rotation(rng).matrix();
      Mat3 s;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) s(a, b) = rng.normal();
      s = 0.5 * (s + s.transpose());
      s /= s.norm();
      rots.push_back(mat_tensor(r));
      perturbed.push_back(mat_tensor(r * (Mat3::Identity() + eps * s)));
    }
    ortho_zero = std::max(ortho_zero, canon::loss_ortho(rots).item());
    ortho_min = std::min(ortho_min, canon::loss_ortho(perturbed).item());
  }

  std::vector<Vec3> a(50), b(50);
  for (auto& v : a) v = Vec3(rng.normal(), rng.normal(), rng.normal());
  for (auto& v : b) v = Vec3(rng.normal(), rng.normal(), rng.normal());
  auto directed = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double s = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      Vec3 nearest = to[0];
      for (const auto& q : to) {
        const double dd = (p - q).squaredNorm();
        if (dd < best) {
          best = dd;
          nearest = q;
        }
      }
      for (int k = 0; k < 3; ++k) s += (p[k] - nearest[k]) * (p[k] - nearest[k]);
    }
    return s * (1.0 / static_cast<double>(from.size()));
  };
  const double oracle = directed(a, b) + directed(b, a);
  const double siamese = canon::loss_siamese(points_tensor(a), points_tensor(b)).item();

  CheckResult lower{"losses", "ortho_perturbed_lower_bound", ortho_min, eps / 2.0,
                    ortho_min >= eps / 2.0};
  return {upper("losses", "canon_exact_reconstruction", canon_exact, 1e-12),
          upper("losses", "ortho_zero_on_rotations", ortho_zero, 1e-12), lower,
          upper("losses", "siamese_matches_oracle", std::abs(siamese - oracle), 0.0)};
}

std::vector<CheckResult> run_verification(const VerifyOptions& opt) {
  using Group = std::vector<CheckResult> (*)(const VerifyOptions&);
  const std::pair<const char*, Group> groups[] = {
      {"sh_wigner", &check_sh_wigner}, {"cg", &check_cg},           {"lemmas", &check_lemmas},
      {"layers", &check_layers},       {"autodiff", &check_autodiff}, {"losses", &check_losses}};
  std::vector<CheckResult> all;
  for (const auto& [name, group] : groups) {
    try {
      auto part = group(opt);
      all.insert(all.end(), part.begin(), part.end());
    } catch (const Error& e) {
      // A group that cannot run counts as one failed check.
      all.push_back({name, std::string("aborted: ") + e.what(),
                     std::numeric_limits<double>::infinity(), 0.0, false});
    }
  }
  return all;
}

bool all_passed(const std::vector<CheckResult>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

void print_checks(std::ostream& os, const std::vector<CheckResult>& checks) {
  char buf[256];
  for (const auto& c : checks) {
    const bool lower = c.name.ends_with("lower_bound");
    std::snprintf(buf, sizeof buf, "%s %s/%s residual=%.3e %s %.3e\n", c.passed ? "PASS" : "FAIL",
                  c.group.c_str(), c.name.c_str(), c.residual, lower ? ">=" : "<=", c.tolerance);
    os << buf;
  }
}

}  // namespace cafield::cli
