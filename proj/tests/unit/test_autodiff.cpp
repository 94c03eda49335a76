#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "cafield/ad/checkpoint.hpp"
#include "cafield/ad/gradcheck.hpp"
#include "cafield/ad/ops.hpp"
#include "cafield/ad/optim.hpp"
#include "cafield/error.hpp"
#include "cafield/random.hpp"

using namespace cafield;
using namespace cafield::ad;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad = true) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v), grad);
}

}  // namespace

TEST(Matmul, IdentityTimesVector) {
  auto eye = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto v = Tensor::matrix(3, 1, {4, -5, 6});
  auto r = matmul(eye, v);
  ASSERT_EQ(r.shape(), (Shape{3, 1}));
  EXPECT_EQ(r[0], 4);
  EXPECT_EQ(r[1], -5);
  EXPECT_EQ(r[2], 6);
}

TEST(Matmul, ScalarProduct) {
  auto r = matmul(Tensor::matrix(1, 1, {2}), Tensor::matrix(1, 1, {3}));
  EXPECT_EQ(r[0], 6);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST(Matmul, Gradcheck) {
  Rng rng(1);
  auto a = random_tensor({4, 5}, rng);
  auto b = random_tensor({5, 2}, rng);
  auto rep = gradcheck([](const std::vector<Tensor>& in) { return sum(square(matmul(in[0], in[1]))); },
                       {a, b}, 1e-6);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(Elementwise, ReluAndExp) {
  auto r = relu(Tensor({3}, {-1, 0, 2}));
  EXPECT_EQ(r[0], 0);
  EXPECT_EQ(r[1], 0);
  EXPECT_EQ(r[2], 2);
  EXPECT_EQ(ad::exp(Tensor({1}, {0.0}))[0], 1.0);
}

TEST(Elementwise, ReluSubgradientAtZeroIsZero) {
  Tensor x({2}, {0.0, 1.0}, true);
  sum(relu(x)).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
}

TEST(Elementwise, BroadcastAndErrors) {
  auto r = add(Tensor({2, 3}, {0, 1, 2, 3, 4, 5}), Tensor({3}, {10, 20, 30}));
  EXPECT_EQ(r[4], 24);
  auto c = mul(Tensor({2, 1}, {2, 3}), Tensor({1, 3}, {1, 2, 3}));
  EXPECT_EQ(c.shape(), (Shape{2, 3}));
  EXPECT_EQ(c[5], 9);
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({4})), DimensionError);
}

TEST(Elementwise, MulGradcheck) {
  Rng rng(2);
  auto a = random_tensor({3, 3}, rng);
  auto b = random_tensor({3, 3}, rng);
  auto rep = gradcheck([](const std::vector<Tensor>& in) { return sum(mul(in[0], in[1])); },
                       {a, b}, 1e-6);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

// Each differentiable op against central differences, 100 random trials.
TEST(Elementwise, AllOpsGradcheckRandomTrials) {
  Rng rng(3);
  const std::vector<std::pair<const char*, ScalarFn>> cases = {
      {"add", [](const auto& in) { return sum(square(add(in[0], in[1]))); }},
      {"sub", [](const auto& in) { return sum(square(sub(in[0], in[1]))); }},
      {"mul_bcast", [](const auto& in) { return sum(mul(in[0], slice(in[1], 0, 0, 1))); }},
      {"scale", [](const auto& in) { return sum(square(scale(in[0], -1.7))); }},
      {"relu", [](const auto& in) { return sum(mul(relu(in[0]), in[1])); }},
      {"exp", [](const auto& in) { return sum(ad::exp(in[0])); }},
      {"sqrt", [](const auto& in) { return sum(ad::sqrt(add(square(in[0]), Tensor::scalar(0.5)))); }},
      {"transpose", [](const auto& in) { return sum(mul(transpose(in[0]), transpose(in[1]))); }},
      {"sum_axis", [](const auto& in) { return sum(square(sum(in[0], 1))); }},
      {"mean_axis", [](const auto& in) { return sum(square(mean(in[0], 0))); }},
      {"max_axis", [](const auto& in) { return sum(square(max(in[0], 1).values)); }},
      {"reshape", [](const auto& in) { return sum(square(reshape(in[0], {2, 2, 2}))); }},
      {"concat", [](const auto& in) { return sum(square(concat({in[0], in[1]}, 1))); }},
      {"gather", [](const auto& in) { return sum(square(gather(in[0], {1, 1, 0, 3}))); }},
  };
  for (const auto& [name, fn] : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      auto a = random_tensor({4, 2}, rng);
      auto b = random_tensor({4, 2}, rng);
      worst = std::max(worst, gradcheck(fn, {a, b}, 1e-5).max_rel_error);
    }
    EXPECT_LT(worst, 1e-5) << name;
  }
}

TEST(Elementwise, LeftMultiplyGradcheck) {
  Rng rng(4);
  auto m = random_tensor({5, 3}, rng);
  auto x = random_tensor({2, 3, 4}, rng);
  auto rep = gradcheck([](const auto& in) { return sum(square(left_multiply(in[0], in[1]))); },
                       {m, x}, 1e-6);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(Reduce, MeanAndMaxTie) {
  EXPECT_DOUBLE_EQ(mean(Tensor({3}, {1, 2, 3})).item(), 2.0);
  auto r = max(Tensor({3}, {3, 3, 1}), 0);
  EXPECT_EQ(r.values.item(), 3.0);
  EXPECT_EQ(r.argmax[0], 0u);
}

TEST(Reduce, MaxRoutesGradientToWinner) {
  Tensor x({3}, {3, 3, 1}, true);
  max(x, 0).values.backward();
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1], 0.0);
}

TEST(Reduce, EmptyAxisAndBadAxis) {
  EXPECT_THROW(max(Tensor::zeros({0}), 0), DomainError);
  EXPECT_THROW(mean(Tensor::zeros({2, 0}), 1), DomainError);
  EXPECT_THROW(sum(Tensor::zeros({2}), 3), DimensionError);
}

TEST(Reduce, SumGradcheck) {
  Rng rng(5);
  auto a = random_tensor({3, 4}, rng);
  auto rep = gradcheck([](const auto& in) { return sum(mul(sum(in[0], 0), sum(in[0], 0))); },
                       {a}, 1e-6);
  EXPECT_TRUE(rep.passed);
}

TEST(BatchNorm, EvalConstantBatchWithMatchingRunningStatsIsZero) {
  BatchNormState st(2);
  st.running_mean = {5.0, -1.0};
  st.running_var = {1.0, 1.0};
  Tensor x({3, 2}, {5, -1, 5, -1, 5, -1});
  auto y = batch_norm(x, st, false);
  for (double v : y.values()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(BatchNorm, MomentumUpdate) {
  BatchNormState st(1);
  st.running_mean = {1.0};
  st.running_var = {2.0};
  batch_norm(Tensor({2, 1}, {3.0, 5.0}), st, true);
  EXPECT_DOUBLE_EQ(st.running_mean[0], 0.75 * 1.0 + 0.25 * 4.0);
  EXPECT_DOUBLE_EQ(st.running_var[0], 0.75 * 2.0 + 0.25 * 1.0);
}

TEST(BatchNorm, TrainingOutputIsStandardized) {
  Rng rng(6);
  BatchNormState st(3);
  auto x = random_tensor({50, 3}, rng, false);
  auto y = batch_norm(x, st, true);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < 50; ++r) m += y[r * 3 + c];
    m /= 50;
    for (std::size_t r = 0; r < 50; ++r) v += (y[r * 3 + c] - m) * (y[r * 3 + c] - m);
    v /= 50;
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-6);
  }
}

TEST(BatchNorm, EmptyBatchAndChannelMismatch) {
  BatchNormState st(2);
  EXPECT_THROW(batch_norm(Tensor::zeros({0, 2}), st, true), DomainError);
  EXPECT_THROW(batch_norm(Tensor::zeros({4, 3}), st, true), DimensionError);
}

TEST(BatchNorm, Gradcheck) {
  Rng rng(7);
  BatchNormState st(3);
  auto g = random_tensor({3}, rng);
  auto b = random_tensor({3}, rng);
  st.gamma = g;
  st.beta = b;
  auto x = random_tensor({6, 3}, rng);
  auto w = random_tensor({6, 3}, rng, false);
  for (bool training : {true, false}) {
    auto rep = gradcheck(
        [&](const auto& in) {
          st.gamma = in[1];
          st.beta = in[2];
          return sum(mul(batch_norm(in[0], st, training), w));
        },
        {x, g, b}, 1e-5);
    EXPECT_TRUE(rep.passed) << training << " " << rep.max_rel_error;
  }
}

TEST(Backward, SquareAtThree) {
  Tensor x = Tensor::scalar(3.0, true);
  mul(x, x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, NonScalarThrows) {
  Tensor x({2}, {1, 2}, true);
  EXPECT_THROW(scale(x, 2.0).backward(), UsageError);
}

TEST(Backward, ReluNetworkGradcheck) {
  Rng rng(8);
  auto w = random_tensor({5, 5}, rng);
  auto x = random_tensor({5, 1}, rng, false);
  auto rep = gradcheck([&](const auto& in) { return sum(relu(matmul(in[0], x))); }, {w}, 1e-5);
  EXPECT_TRUE(rep.passed);
}

TEST(Backward, DetachedBranchGetsNoGradient) {
  Tensor x({2}, {1, 2}, true);
  auto d = x.detach();
  auto loss = sum(mul(d, d));
  loss.backward();
  EXPECT_FALSE(x.has_grad() && (x.grad()[0] != 0.0 || x.grad()[1] != 0.0));
}

TEST(Backward, RepeatedCallsAccumulate) {
  Tensor x = Tensor::scalar(2.0, true);
  auto loss = mul(x, x);
  loss.backward();
  loss.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

TEST(Backward, SharedInputSumsAdjoints) {
  Rng rng(9);
  auto x = random_tensor({4}, rng);
  auto f = [](const Tensor& t) { return sum(ad::exp(t)); };
  auto g = [](const Tensor& t) { return sum(square(t)); };
  add(f(x), g(x)).backward();
  std::vector<double> both(x.grad().begin(), x.grad().end());
  x.zero_grad();
  f(x).backward();
  g(x).backward();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(both[i], x.grad()[i], 1e-14);
}

TEST(Adam, ZeroGradientZeroDecayIsFixedPoint) {
  Tensor p({3}, {1, -2, 3}, true);
  AdamState st(AdamConfig{.weight_decay = 0.0});
  for (int i = 0; i < 5; ++i) {
    p.mutable_grad();
    adam_step({p}, st);
  }
  EXPECT_EQ(p[0], 1);
  EXPECT_EQ(p[1], -2);
  EXPECT_EQ(p[2], 3);
  EXPECT_EQ(st.step, 5u);
}

TEST(Adam, FirstStepIsLrTimesSign) {
  for (double g : {0.3, -7.0}) {
    Tensor p = Tensor::scalar(0.5, true);
    AdamState st(AdamConfig{.weight_decay = 0.0});
    p.mutable_grad()[0] = g;
    adam_step({p}, st);
    EXPECT_NEAR(p.item() - 0.5, -st.config.lr * (g > 0 ? 1.0 : -1.0), 1e-6);
    EXPECT_EQ(p.grad()[0], 0.0);
  }
}

TEST(Adam, Defaults) {
  AdamConfig c;
  EXPECT_EQ(c.lr, 6e-4);
  EXPECT_EQ(c.weight_decay, 1e-5);
  EXPECT_EQ(c.beta1, 0.9);
  EXPECT_EQ(c.beta2, 0.999);
  EXPECT_EQ(c.eps, 1e-8);
}

TEST(Adam, MissingGradientThrows) {
  Tensor p({2}, {1, 2}, true);
  AdamState st;
  EXPECT_THROW(adam_step({p}, st), UsageError);
}

TEST(Gradcheck, QuadraticForm) {
  Rng rng(10);
  auto a = random_tensor({4, 4}, rng, false);
  auto x = random_tensor({4, 1}, rng);
  auto rep = gradcheck([&](const auto& in) { return sum(mul(in[0], matmul(a, in[0]))); }, {x},
                       1e-7);
  EXPECT_LT(rep.max_rel_error, 1e-7);
}

TEST(Gradcheck, ConstantFunction) {
  Tensor x({3}, {1, 2, 3}, true);
  auto rep = gradcheck([](const auto& in) { return add(scale(sum(in[0]), 0.0), Tensor::scalar(4)); },
                       {x}, 1e-9);
  EXPECT_EQ(rep.max_rel_error, 0.0);
}

TEST(Checkpoint, RoundTrip) {
  Rng rng(11);
  Checkpoint c;
  c.meta["l_max"] = "2";
  c.meta["note"] = "two words";
  c.tensors.emplace_back("w", random_tensor({2, 3}, rng));
  c.tensors.emplace_back("s", Tensor::scalar(-1.25));
  auto path = std::filesystem::temp_directory_path() / "cafield_ckpt_test.txt";
  write_checkpoint(path, c);
  auto r = read_checkpoint(path);
  EXPECT_EQ(r.meta_at("l_max"), "2");
  EXPECT_EQ(r.meta_at("note"), "two words");
  ASSERT_EQ(r.tensors.size(), 2u);
  EXPECT_EQ(r.at("w").shape(), (Shape{2, 3}));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(r.at("w")[i], c.tensors[0].second[i]);
  EXPECT_EQ(r.at("s").item(), -1.25);
  EXPECT_EQ(std::filesystem::file_size(path.string() + ".bin"), 7 * sizeof(double));
}
