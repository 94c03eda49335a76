#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "cafield/ad/gradcheck.hpp"
#include "cafield/canon/canon.hpp"
#include "cafield/error.hpp"
#include "cafield/field/preprocess.hpp"
#include "cafield/field/synth.hpp"
#include "cafield/random.hpp"
#include "cafield/so3/wigner.hpp"

using namespace cafield;
using namespace cafield::canon;

namespace {

Tensor points(const std::vector<Vec3>& v, bool grad = false) {
  std::vector<double> d;
  for (const auto& p : v) d.insert(d.end(), {p.x(), p.y(), p.z()});
  return Tensor({v.size(), 3}, d, grad);
}

Tensor mat(const Mat3& m, bool grad = false) {
  std::vector<double> d;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) d.push_back(m(i, j));
  return Tensor({3, 3}, d, grad);
}

std::vector<Vec3> random_points(Rng& rng, std::size_t n) {
  std::vector<Vec3> v;
  for (std::size_t i = 0; i < n; ++i) v.emplace_back(rng.normal(), rng.normal(), rng.normal());
  return v;
}

net::ModelConfig small_model() {
  net::ModelConfig c;
  c.lmax = 2;
  c.channels = {4, 4, 4};
  c.embed = 16;
  return c;
}

field::DensityGrid instance_grid(const std::string& cat, std::uint64_t seed, std::size_t n) {
  const auto s = field::synth_generate(cat, seed);
  return field::resample_object_grid(*s.provider, field::scene_probe(*s.provider), n);
}

}  // namespace

TEST(Foreground, BinaryFieldSelectsOnes) {
  field::DensityGrid g;
  g.dims = {5, 5, 5};
  g.values.assign(125, 0.0);
  std::vector<std::size_t> ones;
  for (std::size_t i = 0; i < 125; i += 7) {
    g.values[i] = 1.0;
    ones.push_back(i);
  }
  EXPECT_EQ(foreground_cluster(g).cells, ones);
}

TEST(Foreground, BlobOverNoiseFloor) {
  const std::size_t n = 20;
  field::DensityGrid g;
  g.dims = {n, n, n};
  g.values.resize(n * n * n);
  Rng rng(3);
  std::vector<double> blob(g.values.size());
  for (std::size_t f = 0; f < g.size(); ++f) {
    const Vec3 x = g.position(f);
    blob[f] = 0.95 * std::exp(-(x - Vec3(0.5, 0.45, 0.55)).squaredNorm() / (2 * 0.1 * 0.1));
    g.values[f] = std::min(1.0, blob[f] + 0.02 + 0.004 * (rng.uniform() - 0.5));
  }
  const auto mask = foreground_cluster(g, 1);
  std::vector<bool> in(g.size(), false);
  for (auto c : mask.cells) in[c] = true;
  // Oracle: the threshold sweep separating the two modes lies between the
  // floor band and the blob core; every core cell must be selected.
  std::size_t floor_cells = 0, floor_selected = 0;
  for (std::size_t f = 0; f < g.size(); ++f) {
    if (blob[f] > 0.5) {
      EXPECT_TRUE(in[f]);
    }
    if (blob[f] < 1e-3) {
      ++floor_cells;
      if (in[f]) ++floor_selected;
    }
  }
  ASSERT_GT(floor_cells, 0u);
  EXPECT_LE(floor_selected, floor_cells / 100);
  double fg = 0, bg = 0;
  for (std::size_t f = 0; f < g.size(); ++f) (in[f] ? fg : bg) += g.values[f];
  EXPECT_GT(fg / static_cast<double>(mask.cells.size()), bg / static_cast<double>(g.size() - mask.cells.size()));
}

TEST(Foreground, ConstantFieldIsDegenerate) {
  field::DensityGrid g;
  g.dims = {4, 4, 4};
  g.values.assign(64, 0.3);
  EXPECT_THROW(foreground_cluster(g), DegenerateInputError);
}

TEST(SelectBest, IdentityBeatsFlip) {
  Rng rng(1);
  const auto x = random_points(rng, 10);
  const Mat3 flip = Eigen::Vector3d(1, -1, -1).asDiagonal() * so3::Rotation::axis_angle(Vec3::UnitZ(), M_PI).matrix();
  const auto s = select_best_transform(x, x, {Mat3::Identity(), flip});
  EXPECT_EQ(s.index, 0u);
  EXPECT_EQ(s.residual, 0.0);
}

TEST(SelectBest, ExactInverseWins) {
  Rng rng(2);
  const auto x = random_points(rng, 12);
  const Mat3 r0 = so3::random_rotation(rng).matrix();
  std::vector<Vec3> p;
  for (const auto& v : x) p.push_back(r0.transpose() * v);
  const auto s = select_best_transform(x, p, {so3::random_rotation(rng).matrix(), r0, Mat3::Identity()});
  EXPECT_EQ(s.index, 1u);
  EXPECT_NEAR(s.residual, 0.0, 1e-28);
}

TEST(SelectBest, SingleCandidateResidualMatchesBruteForce) {
  Rng rng(3);
  const auto x = random_points(rng, 9), p = random_points(rng, 9);
  Mat3 e;
  for (int i = 0; i < 9; ++i) e(i / 3, i % 3) = rng.normal();
  double brute = 0.0;
  for (std::size_t i = 0; i < 9; ++i)
    for (int a = 0; a < 3; ++a) {
      double pred = 0.0;
      for (int b = 0; b < 3; ++b) pred += e(a, b) * p[i][b];
      brute += (x[i][a] - pred) * (x[i][a] - pred);
    }
  const auto s = select_best_transform(x, p, {e});
  EXPECT_NEAR(s.residual, brute / 9.0, 1e-12);
  EXPECT_NEAR(loss_canon(points(x), points(p), mat(e))[0], s.residual, 1e-12);
}

TEST(LossCanon, ExactReconstructionAndSinglePerturbation) {
  Rng rng(4);
  auto x = random_points(rng, 8);
  EXPECT_EQ(loss_canon(points(x), points(x), mat(Mat3::Identity()))[0], 0.0);
  auto p = x;
  const Vec3 delta(0.1, -0.2, 0.05);
  p[3] += delta;
  EXPECT_NEAR(loss_canon(points(x), points(p), mat(Mat3::Identity()))[0], delta.squaredNorm() / 8.0, 1e-15);
}

TEST(LossCanon, Gradcheck) {
  Rng rng(5);
  const Tensor x = points(random_points(rng, 20));
  const Tensor p = points(random_points(rng, 20), true);
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = rng.normal();
  const Tensor e = mat(m, true);
  const auto r = ad::gradcheck([&](const std::vector<Tensor>&) { return loss_canon(x, p, e); }, {p, e}, 1e-5);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(LossOrtho, ZeroForOrthonormalAndScaledIdentity) {
  Rng rng(6);
  const Mat3 reflect = Eigen::Vector3d(1, 1, -1).asDiagonal();
  EXPECT_NEAR(loss_ortho({mat(so3::random_rotation(rng).matrix()), mat(reflect)})[0], 0.0, 1e-12);
  EXPECT_NEAR(loss_ortho({mat(2.0 * Mat3::Identity())})[0], std::sqrt(3.0), 1e-12);
}

TEST(LossOrtho, Gradcheck) {
  Rng rng(7);
  std::vector<Tensor> e;
  for (int j = 0; j < 3; ++j) {
    Mat3 m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = rng.normal();
    e.push_back(mat(m, true));
  }
  const auto r = ad::gradcheck([&](const std::vector<Tensor>&) { return loss_ortho(e); }, e, 1e-5);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(LossSiamese, Examples) {
  Rng rng(8);
  const auto a = random_points(rng, 10);
  EXPECT_EQ(loss_siamese(points(a), points(a))[0], 0.0);
  const double eps = 0.3;
  EXPECT_NEAR(loss_siamese(points({Vec3::Zero()}), points({Vec3(eps, 0, 0)}))[0], 2 * eps * eps, 1e-15);
}

TEST(LossSiamese, MatchesDoubleLoopOracle) {
  Rng rng(9);
  const auto a = random_points(rng, 50), b = random_points(rng, 50);
  auto directed = [](const std::vector<Vec3>& s, const std::vector<Vec3>& t) {
    double sum = 0.0;
    for (const auto& p : s) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : t) best = std::min(best, (p - q).squaredNorm());
      sum += best;
    }
    return sum / static_cast<double>(s.size());
  };
  EXPECT_EQ(loss_siamese(points(a), points(b))[0], directed(a, b) + directed(b, a));
}

TEST(TotalLoss, Weights) {
  EXPECT_EQ(total_loss(LossParts{0, 0, 0.0}), 0.0);
  EXPECT_EQ(total_loss(LossParts{1, 1, 1.0}), 4.0);
  EXPECT_EQ(total_loss(LossParts{1, 1, std::nullopt}), 3.0);
  EXPECT_THROW(total_loss(LossParts{std::nan(""), 1, 1.0}), NumericError);
}

class TrainingTest : public ::testing::Test {
 protected:
  void SetUp() override {
    for (std::uint64_t s = 0; s < 4; ++s) data.push_back({"wedge", instance_grid("wedge", s, 12)});
    cfg.epochs = 3;
    cfg.seed = 5;
  }
  std::vector<TrainingInstance> data;
  TrainingConfig cfg;
};

TEST_F(TrainingTest, FrozenWeightsRepeatLosses) {
  net::Model m(small_model(), 1);
  cfg.adam.lr = 0.0;
  cfg.repeat_augmentation = true;
  const auto r = train(m, data, cfg);
  ASSERT_EQ(r.log.size(), 3u);
  EXPECT_EQ(r.log[0].total, r.log[1].total);
  EXPECT_EQ(r.log[1].total, r.log[2].total);
}

TEST_F(TrainingTest, SiameseOffDropsColumn) {
  net::Model m(small_model(), 1);
  cfg.epochs = 1;
  cfg.siamese = false;
  std::ostringstream log;
  const auto r = train(m, data, cfg, &log);
  EXPECT_FALSE(r.log[0].parts.siamese.has_value());
  EXPECT_EQ(log.str().find("siamese\t"), std::string::npos);
  EXPECT_NE(log.str().find("epoch\tcanon\tortho\ttotal"), std::string::npos);
}

TEST_F(TrainingTest, InvalidDatasets) {
  net::Model m(small_model(), 1);
  EXPECT_THROW(train(m, {}, cfg), UsageError);
  EXPECT_THROW(train(m, {data[0]}, cfg), UsageError);
  cfg.siamese = false;
  cfg.epochs = 1;
  EXPECT_NO_THROW(train(m, {data[0]}, cfg));
}

TEST_F(TrainingTest, DeterministicAndCheckpointCadence) {
  net::Model a(small_model(), 2), b(small_model(), 2);
  cfg.checkpoint_every = 2;
  std::vector<std::size_t> saved;
  std::ostringstream la, lb;
  train(a, data, cfg, &la, [&](std::size_t e, const net::Model&) { saved.push_back(e); });
  train(b, data, cfg, &lb);
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_EQ(saved, std::vector<std::size_t>{2});
}

class InferenceTest : public ::testing::Test {
 protected:
  InferenceTest() : model(small_model(), 3) {}
  net::Model model;
};

TEST_F(InferenceTest, DeterministicOrthonormalOutput) {
  const auto s = field::synth_generate("lblock", 4, 0.0, 0.0, false);
  const auto a = canonicalize(model, *s.provider, 12);
  const auto b = canonicalize(model, *s.provider, 12);
  EXPECT_LT(so3::angle_between(a.rotation, b.rotation), 1e-6);
  EXPECT_LT((a.rotation.transpose() * a.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(a.rotation.determinant(), 1.0, 1e-12);
  EXPECT_EQ(a.p.size(), foreground_cluster(field::resample_object_grid(*s.provider, field::scene_probe(*s.provider), 12)).cells.size());
}

TEST_F(InferenceTest, SphericallySymmetricFieldHasNoPreferredCandidate) {
  const field::BallProvider ball(Vec3(0.5, 0.5, 0.5), 0.2, 80.0);
  field::SceneBounds b{Vec3(0.5, 0.5, 0.5), 0.5, 1};
  const auto grid = field::resample_object_grid(ball, b, 13);
  auto f = forward_instance(model, grid, false);
  std::vector<double> residuals;
  for (const auto& e : f.out.e) {
    Mat3 m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = e[static_cast<std::size_t>(i)];
    std::vector<Vec3> p;
    for (std::size_t i = 0; i < f.out.p.dim(0); ++i) p.emplace_back(f.out.p[i * 3], f.out.p[i * 3 + 1], f.out.p[i * 3 + 2]);
    residuals.push_back(select_best_transform(f.input.query, p, {m}).residual);
  }
  for (double r : residuals) EXPECT_NEAR(r, residuals[0], 1e-6);
}

TEST_F(InferenceTest, TranslationFollowsShift) {
  const auto s = field::synth_generate("slab", 2, 0.0, 0.0, false);
  const Vec3 t(2.0 / 32, -1.0 / 32, 3.0 / 32);
  const field::TranslatedProvider shifted(s.provider, t);
  const auto a = canonicalize(model, *s.provider, 12);
  const auto b = canonicalize(model, shifted, 12);
  EXPECT_LT((b.translation - a.translation - t).norm(), 1.0 / 32);
  EXPECT_LT(so3::angle_between(a.rotation, b.rotation), 1e-4);
}

TEST_F(InferenceTest, CanonLossIsRotationInvariant) {
  const auto grid = instance_grid("wedge", 7, 12);
  auto f = forward_instance(model, grid, false);
  Rng rng(11);
  auto loss_of = [&](const net::NetInput& in) {
    const auto out = model.forward(in);
    std::vector<Mat3> cands;
    for (const auto& e : out.e) {
      Mat3 m;
      for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = e[static_cast<std::size_t>(i)];
      cands.push_back(m);
    }
    std::vector<Vec3> p;
    for (std::size_t i = 0; i < out.p.dim(0); ++i) p.emplace_back(out.p[i * 3], out.p[i * 3 + 1], out.p[i * 3 + 2]);
    return select_best_transform(in.query, p, cands).residual;
  };
  const double base = loss_of(f.input);
  for (int t = 0; t < 3; ++t) {
    const auto r = so3::random_rotation(rng);
    EXPECT_NEAR(loss_of(net::rotate_input(f.input, r, model.config())), base, 1e-5 * std::max(1.0, base));
  }
}

TEST(CanonResult, RoundTrip) {
  CanonicalizationResult r;
  Rng rng(1);
  r.rotation = so3::random_rotation(rng).matrix();
  r.translation = Vec3(0.1, 0.2, 0.3);
  r.scale = 4.5;
  r.candidate = 3;
  r.residual = 0.125;
  const auto path = std::filesystem::temp_directory_path() / "cafield_test_canon.json";
  write_result(path, r);
  const auto s = read_result(path);
  EXPECT_EQ(s.rotation, r.rotation);
  EXPECT_EQ(s.translation, r.translation);
  EXPECT_EQ(s.scale, r.scale);
  EXPECT_EQ(s.candidate, r.candidate);
  EXPECT_EQ(s.residual, r.residual);
  std::filesystem::remove(path);
}
