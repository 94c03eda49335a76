#include <gtest/gtest.h>

#include <cmath>

#include "cafield/error.hpp"
#include "cafield/metrics/chamfer.hpp"
#include "cafield/random.hpp"

using namespace cafield;
using namespace cafield::metrics;

namespace {

PointSet random_set(Rng& rng, std::size_t n, double quantum = 0.0) {
  PointSet s;
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (quantum > 0) p = (p / quantum).array().round().matrix() * quantum;
    s.push_back(p);
  }
  return s;
}

}  // namespace

TEST(Chamfer, IdenticalSetsAreZero) {
  Rng rng(1);
  const auto a = random_set(rng, 40);
  EXPECT_EQ(chamfer(a, a), 0.0);
}

TEST(Chamfer, OnePairAlgebra) {
  EXPECT_DOUBLE_EQ(chamfer({Vec3::Zero()}, {Vec3(0.25, 0, 0)}), 2 * 0.0625);
}

TEST(Chamfer, EmptyIsDegenerate) {
  EXPECT_THROW(chamfer({}, {Vec3::Zero()}), DegenerateInputError);
}

TEST(Chamfer, GridMatchesBruteForceIncludingTies) {
  Rng rng(2);
  for (double q : {0.0, 0.25}) {
    const auto a = random_set(rng, 3000, q), b = random_set(rng, 2500, q);
    EXPECT_EQ(nearest_grid(a, b), nearest_brute(a, b));
    EXPECT_EQ(nearest_grid(b, a), nearest_brute(b, a));
  }
}

TEST(Chamfer, GridHandlesQueriesOutsideTheLattice) {
  Rng rng(3);
  const auto b = random_set(rng, 500);
  PointSet a;
  for (int i = 0; i < 50; ++i) a.emplace_back(rng.uniform(-9, 9), rng.uniform(-9, 9), rng.uniform(-9, 9));
  EXPECT_EQ(nearest_grid(a, b), nearest_brute(a, b));
}

TEST(Chamfer, AcceleratedValueIsBitwiseBruteForce) {
  Rng rng(4);
  const auto a = random_set(rng, 2600, 0.125), b = random_set(rng, 2700, 0.125);
  EXPECT_EQ(chamfer(a, b), chamfer_brute(a, b));
}

#include "cafield/metrics/metrics.hpp"
#include "cafield/so3/rotation.hpp"

namespace {

std::vector<EvalInstance> wedge_set(std::size_t n, std::size_t points = 128) {
  std::vector<EvalInstance> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(make_eval_instance("wedge", i, points));
  return s;
}

MetricConfig small_cfg() {
  MetricConfig c;
  c.trials = 3;
  c.seed = 9;
  return c;
}

// Anisotropic box (extents 4 > 2 > 1) whose density falls off linearly
// toward the positive face of each axis, giving positive skew everywhere.
PointSet skewed_box(Rng& rng) {
  auto skewed = [&](double half) { return -half + 2.0 * half * (1.0 - std::sqrt(rng.uniform())); };
  PointSet p;
  for (int i = 0; i < 2000; ++i) {
    const double x = skewed(2.0), y = skewed(1.0), z = skewed(0.5);
    p.emplace_back(x, y, z);
  }
  return p;
}

}  // namespace

TEST(Pca, AxisAlignedSkewedBoxIsIdentity) {
  Rng rng(1);
  const Mat3 r = pca_canonicalizer(skewed_box(rng));
  EXPECT_LT((r - Mat3::Identity()).cwiseAbs().maxCoeff(), 0.05);
  EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
}

TEST(Pca, RotatedCopyReturnsTranspose) {
  Rng rng(2);
  const PointSet p = skewed_box(rng);
  const Mat3 base = pca_canonicalizer(p);
  for (int t = 0; t < 5; ++t) {
    const Mat3 r = so3::random_rotation(rng).matrix();
    const Mat3 c = pca_canonicalizer(transform(r, p));
    EXPECT_LT((c - base * r.transpose()).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Pca, ScaleInvariant) {
  Rng rng(3);
  const PointSet p = skewed_box(rng);
  PointSet q;
  for (const auto& v : p) q.push_back(3.7 * v);
  EXPECT_LT((pca_canonicalizer(p) - pca_canonicalizer(q)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pca, SymmetricAndFlatSetsAreDegenerate) {
  PointSet octa{Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(0, -1, 0), Vec3(0, 0, 1), Vec3(0, 0, -1)};
  EXPECT_THROW(pca_canonicalizer(octa), DegenerateInputError);
  PointSet flat{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 2, 0), Vec3(1, 2, 0)};
  EXPECT_THROW(pca_canonicalizer(flat), DegenerateInputError);
}

TEST(Metrics, OracleIsZero) {
  OracleCanonicalizer oracle;
  const auto set = wedge_set(3);
  EXPECT_LT(instance_consistency(oracle, set, small_cfg()).value, 1e-12);
  EXPECT_LT(ground_truth_equivariance(oracle, set, small_cfg()).value, 1e-12);
}

TEST(Metrics, IdentityInstanceConsistencyMatchesDirectRecomputation) {
  IdentityCanonicalizer id;
  const auto set = wedge_set(2);
  const auto cfg = small_cfg();
  const auto ic = instance_consistency(id, set, cfg);
  EXPECT_GT(ic.value, 0.0);
  EXPECT_EQ(ic.trials, 6u);
  // Recompute with the oracle-corrected sets: C(R P) R P with C = I is R P.
  struct Direct final : Canonicalizer {
    std::vector<Mat3> seen;
    std::string name() const override { return "probe"; }
    Mat3 predict(const EvalInstance&, const Mat3& r) override {
      seen.push_back(r);
      return Mat3::Identity();
    }
  } probe;
  instance_consistency(probe, set, cfg);
  double sum = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t t = 0; t < 3; ++t) {
      const std::size_t q = (i * 3 + t) * 2;
      sum += chamfer_brute(transform(probe.seen[q], set[i].points), transform(probe.seen[q + 1], set[i].points));
    }
  EXPECT_NEAR(ic.value, sum / 6.0, 1e-15);
}

TEST(Metrics, CategoryConsistencyCases) {
  OracleCanonicalizer oracle;
  const auto one = make_eval_instance("lblock", 3, 128);
  EXPECT_LT(category_consistency(oracle, {one, one}, small_cfg()).value, 1e-12);
  const auto a = make_eval_instance("wedge", 1, 128), b = make_eval_instance("slab", 2, 128);
  EXPECT_NEAR(category_consistency(oracle, {a, b}, small_cfg()).value, chamfer_brute(a.points, b.points), 1e-12);
  EXPECT_THROW(category_consistency(oracle, {a}, small_cfg()), UsageError);
}

TEST(Metrics, IdentityGecExceedsOracle) {
  IdentityCanonicalizer id;
  OracleCanonicalizer oracle;
  const auto set = wedge_set(3);
  const double gi = ground_truth_equivariance(id, set, small_cfg()).value;
  const double go = ground_truth_equivariance(oracle, set, small_cfg()).value;
  EXPECT_GT(gi, 0.01);
  EXPECT_LT(go, 1e-12);
  EXPECT_EQ(ground_truth_equivariance(id, set, small_cfg()).trials, 27u * 3u);
}

TEST(Metrics, RelabelingInvariance) {
  IdentityCanonicalizer id;
  auto set = wedge_set(3);
  const auto cfg = small_cfg();
  const double ic = instance_consistency(id, set, cfg).value;
  const double cc = category_consistency(id, set, cfg).value;
  const double ge = ground_truth_equivariance(id, set, cfg).value;
  std::swap(set[0], set[2]);
  EXPECT_NEAR(instance_consistency(id, set, cfg).value, ic, 1e-12);
  EXPECT_NEAR(category_consistency(id, set, cfg).value, cc, 1e-12);
  EXPECT_NEAR(ground_truth_equivariance(id, set, cfg).value, ge, 1e-12);
}

TEST(Metrics, SampledTriplesWhenLarge) {
  IdentityCanonicalizer id;
  auto cfg = small_cfg();
  cfg.exhaustive_limit = 10;
  cfg.sampled_triples = 7;
  EXPECT_EQ(ground_truth_equivariance(id, wedge_set(3), cfg).trials, 21u);
}

TEST(Report, SuiteAndJsonRoundTrip) {
  OracleCanonicalizer oracle;
  auto set = wedge_set(2);
  set.push_back(make_eval_instance("slab", 0, 128));
  set.push_back(make_eval_instance("slab", 1, 128));
  auto r = evaluate_suite(oracle, set, small_cfg());
  ASSERT_EQ(r.categories.size(), 2u);
  for (const auto& c : r.categories) {
    EXPECT_LT(c.ic, 1e-10);
    EXPECT_LT(c.cc, 1e-10 + 100 * 1.0);  // different instances differ even when aligned
    EXPECT_LT(c.gec, 1e-10);
  }
  r.settings.emplace_back("dataset", "desk");
  const auto text = report_to_json(r);
  const auto back = report_from_json(text);
  EXPECT_EQ(report_to_json(back), text);
  EXPECT_FALSE(back.references.empty());
  EXPECT_THROW(report_from_json("{\"format\": \"other\"}"), FormatError);
}
