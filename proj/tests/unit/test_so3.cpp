#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cafield/error.hpp"
#include "cafield/so3/cg.hpp"
#include "cafield/so3/rotation.hpp"
#include "cafield/so3/sh.hpp"
#include "cafield/so3/sphere.hpp"
#include "cafield/so3/wigner.hpp"

using namespace cafield;
using namespace cafield::so3;
using std::numbers::pi;

namespace {

Vec3 random_unit(Rng& rng) {
  Vec3 v(rng.normal(), rng.normal(), rng.normal());
  return v.normalized();
}

// Hand-written Cartesian real harmonics, degrees 0..3, m = -l..l.
Eigen::VectorXd cartesian_sh(int l, const Vec3& d) {
  const double x = d.x(), y = d.y(), z = d.z();
  Eigen::VectorXd v(2 * l + 1);
  switch (l) {
    case 0:
      v << 0.5 / std::sqrt(pi);
      break;
    case 1: {
      const double c = std::sqrt(3.0 / (4.0 * pi));
      v << c * y, c * z, c * x;
      break;
    }
    case 2: {
      const double a = 0.5 * std::sqrt(15.0 / pi);
      v << a * x * y, a * y * z, 0.25 * std::sqrt(5.0 / pi) * (3 * z * z - 1), a * x * z,
          0.25 * std::sqrt(15.0 / pi) * (x * x - y * y);
      break;
    }
    case 3:
      v << 0.25 * std::sqrt(35.0 / (2 * pi)) * y * (3 * x * x - y * y),
          0.5 * std::sqrt(105.0 / pi) * x * y * z,
          0.25 * std::sqrt(21.0 / (2 * pi)) * y * (5 * z * z - 1),
          0.25 * std::sqrt(7.0 / pi) * z * (5 * z * z - 3),
          0.25 * std::sqrt(21.0 / (2 * pi)) * x * (5 * z * z - 1),
          0.25 * std::sqrt(105.0 / pi) * z * (x * x - y * y),
          0.25 * std::sqrt(35.0 / (2 * pi)) * x * (x * x - 3 * y * y);
      break;
  }
  return v;
}

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0);
  w.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (t * p1 - p0) / (t * t - 1);
      const double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    x[i] = t;
    w[i] = 2.0 / ((1 - t * t) * dp * dp);
  }
}

}  // namespace

TEST(RealSH, DegreeZeroConstant) {
  Rng rng(1);
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(eval_real_sh(0, random_unit(rng))(0), 0.2820948, 1e-7);
  }
}

TEST(RealSH, DegreeOneOnZAxis) {
  auto v = eval_real_sh(1, Vec3(0, 0, 1));
  EXPECT_NEAR(v(0), 0.0, 1e-15);
  EXPECT_NEAR(v(1), 0.4886025, 1e-7);
  EXPECT_NEAR(v(2), 0.0, 1e-15);
}

TEST(RealSH, MatchesCartesianFormulas) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 d = random_unit(rng);
    for (int l = 0; l <= 3; ++l) {
      EXPECT_LT((eval_real_sh(l, d) - cartesian_sh(l, d)).cwiseAbs().maxCoeff(), 1e-13) << l;
    }
  }
}

TEST(RealSH, NonUnitDirectionThrows) {
  EXPECT_THROW(eval_real_sh(1, Vec3(1, 1, 0)), DomainError);
  EXPECT_THROW(eval_real_sh(2, Vec3(0, 0, 0)), DomainError);
}

TEST(RealSH, QuadratureGramIsIdentity) {
  std::vector<double> gx, gw;
  gauss_legendre(16, gx, gw);
  const int nphi = 32;
  const int L = 3;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(sh_count(L), sh_count(L));
  for (std::size_t i = 0; i < gx.size(); ++i) {
    for (int k = 0; k < nphi; ++k) {
      const double phi = 2 * pi * k / nphi;
      const double s = std::sqrt(1 - gx[i] * gx[i]);
      const Vec3 d(s * std::cos(phi), s * std::sin(phi), gx[i]);
      const auto y = eval_real_sh_all(L, d);
      gram += gw[i] * (2 * pi / nphi) * y * y.transpose();
    }
  }
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(sh_count(L), sh_count(L))).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SolidSH, OriginAndScale) {
  for (int l = 0; l <= 3; ++l) EXPECT_EQ(solid_sh(l, Vec3::Zero()).norm(), 0.0);
  EXPECT_NEAR(solid_sh(0, Vec3(2, 0, 0))(0), 2.0 / (2.0 * std::sqrt(pi)), 1e-15);
}

TEST(SolidSH, Equivariance) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = random_rotation(rng);
    const Vec3 x(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    for (int l = 0; l <= 3; ++l) {
      EXPECT_LT((solid_sh(l, r * x) - wigner_d(l, r) * solid_sh(l, x)).norm(), 1e-9);
    }
  }
}

TEST(Wigner, TrivialCases) {
  Rng rng(4);
  const auto r = random_rotation(rng);
  EXPECT_NEAR(wigner_d(0, r)(0, 0), 1.0, 1e-15);
  for (int l = 0; l <= 3; ++l) {
    EXPECT_LT((wigner_d(l, Rotation::identity()) - Eigen::MatrixXd::Identity(2 * l + 1, 2 * l + 1))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
  }
}

TEST(Wigner, DegreeOneIsPermutedRotation) {
  Rng rng(5);
  const Mat3 p = type1_to_xyz_matrix();
  for (int trial = 0; trial < 10; ++trial) {
    const auto r = random_rotation(rng);
    // Independent least-squares fit over 12 random directions.
    Eigen::MatrixXd a(12, 3), b(12, 3);
    for (int i = 0; i < 12; ++i) {
      const Vec3 d = random_unit(rng);
      a.row(i) = cartesian_sh(1, d).transpose();
      b.row(i) = cartesian_sh(1, r * d).transpose();
    }
    const Eigen::MatrixXd fit = a.colPivHouseholderQr().solve(b).transpose();
    EXPECT_LT((a * fit.transpose() - b).norm(), 1e-9);
    EXPECT_LT((fit - p.transpose() * r.matrix() * p).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((wigner_d(1, r) - fit).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Wigner, DefiningRelationHomomorphismInverse) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto r1 = random_rotation(rng);
    const auto r2 = random_rotation(rng);
    const Vec3 x = random_unit(rng);
    for (int l = 0; l <= 3; ++l) {
      const auto d1 = wigner_d(l, r1);
      EXPECT_LT((eval_real_sh(l, r1 * x) - d1 * eval_real_sh(l, x)).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_LT((wigner_d(l, r1 * r2) - d1 * wigner_d(l, r2)).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LT((wigner_d(l, r1.inverse()) - d1.transpose()).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_LT((d1 * d1.transpose() - Eigen::MatrixXd::Identity(2 * l + 1, 2 * l + 1))
                    .cwiseAbs()
                    .maxCoeff(),
                1e-10);
    }
  }
}

TEST(Wigner, NonRotationThrows) {
  Mat3 m = Mat3::Identity();
  m(0, 0) = -1;
  EXPECT_THROW(wigner_d(1, m), DomainError);
  EXPECT_THROW(wigner_d(2, Mat3(2.0 * Mat3::Identity())), DomainError);
}

TEST(Wigner, FaultHookBreaksDegreeOne) {
  Rng rng(7);
  const auto r = random_rotation(rng);
  const Vec3 x = random_unit(rng);
  so3::testing::inject_wigner_fault(true);
  const double res = (eval_real_sh(1, r * x) - wigner_d(1, r) * eval_real_sh(1, x)).norm();
  so3::testing::inject_wigner_fault(false);
  EXPECT_GT(res, 1e-3);
}

TEST(CG, ScalarFromTwoVectorsIsDotProduct) {
  Rng rng(8);
  double ratio = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Vec3 a = random_unit(rng) * 1.3, b = random_unit(rng) * 0.7;
    const auto out = cg_project(1, 1, 0, xyz_to_type1(a), xyz_to_type1(b));
    const double r = out(0) / a.dot(b);
    if (trial == 0) ratio = r;
    EXPECT_NEAR(r, ratio, 1e-10);
  }
  EXPECT_NEAR(std::abs(ratio), 1.0 / std::sqrt(3.0), 1e-10);
}

TEST(CG, VectorFromTwoVectorsIsCrossProduct) {
  Rng rng(9);
  double ratio = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Vec3 a = random_unit(rng), b = random_unit(rng);
    const Vec3 out = type1_to_xyz(cg_project(1, 1, 1, xyz_to_type1(a), xyz_to_type1(b)));
    const Vec3 c = a.cross(b);
    const double r = out.dot(c) / c.squaredNorm();
    if (trial == 0) ratio = r;
    EXPECT_NEAR(r, ratio, 1e-10);
    EXPECT_LT((out - r * c).norm(), 1e-10);
  }
  EXPECT_NEAR(std::abs(ratio), 1.0 / std::sqrt(2.0), 1e-10);
}

TEST(CG, EquivarianceAndOrthonormality) {
  Rng rng(10);
  for (int n = 0; n <= 3; ++n)
    for (int l = 0; l <= 3; ++l)
      for (int J = std::abs(n - l); J <= std::min(n + l, 3); ++J) {
        const auto& q = cg_matrix(n, l, J);
        EXPECT_LT((q * q.transpose() - Eigen::MatrixXd::Identity(2 * J + 1, 2 * J + 1))
                      .cwiseAbs()
                      .maxCoeff(),
                  1e-10);
        double worst = 0;
        for (int trial = 0; trial < 100; ++trial) {
          const auto r = random_rotation(rng);
          Eigen::VectorXd a = Eigen::VectorXd::Random(2 * n + 1);
          Eigen::VectorXd b = Eigen::VectorXd::Random(2 * l + 1);
          const Eigen::VectorXd lhs = cg_project(n, l, J, wigner_d(n, r) * a, wigner_d(l, r) * b);
          const Eigen::VectorXd rhs = wigner_d(J, r) * cg_project(n, l, J, a, b);
          worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
        }
        EXPECT_LT(worst, 1e-8) << n << l << J;
      }
}

TEST(CG, StackedProjectionsAreOrthogonal) {
  for (int n = 0; n <= 3; ++n)
    for (int l = 0; l <= 3; ++l) {
      const int d = (2 * n + 1) * (2 * l + 1);
      Eigen::MatrixXd stack(d, d);
      int row = 0;
      for (int J = std::abs(n - l); J <= n + l; ++J) {
        stack.middleRows(row, 2 * J + 1) = cg_matrix(n, l, J);
        row += 2 * J + 1;
      }
      ASSERT_EQ(row, d);
      EXPECT_LT((stack * stack.transpose() - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff(),
                1e-9);
    }
}

TEST(CG, InadmissibleTripleThrows) {
  EXPECT_THROW(cg_matrix(1, 1, 3), DomainError);
  EXPECT_THROW(cg_project(2, 0, 1, Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(1)),
               DomainError);
}

TEST(RandomRotation, InvariantsAndReproducibility) {
  Rng a(11), b(11);
  for (int i = 0; i < 100; ++i) {
    const auto ra = random_rotation(a);
    const auto rb = random_rotation(b);
    EXPECT_TRUE(is_rotation(ra.matrix(), 1e-12));
    EXPECT_EQ(ra.matrix(), rb.matrix());
  }
}

TEST(RandomRotation, HaarMeanIsZero) {
  Rng rng(12);
  Mat3 acc = Mat3::Zero();
  const int n = 100000;
  for (int i = 0; i < n; ++i) acc += random_rotation(rng).matrix();
  EXPECT_LT((acc / n).cwiseAbs().maxCoeff(), 0.02);
}

TEST(SphereSampling, ConstantSignal) {
  SphereSampling s(3);
  const auto c = s.forward(Eigen::VectorXd::Constant(64, 2.0));
  EXPECT_NEAR(c(0), 2.0 * 2.0 * std::sqrt(pi), 1e-10);
  EXPECT_LT(c.tail(c.size() - 1).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SphereSampling, RoundTripAndBasisReproduction) {
  for (int L = 1; L <= 3; ++L) {
    SphereSampling s(L);
    Eigen::VectorXd c = Eigen::VectorXd::Random(sh_count(L));
    EXPECT_LT((s.forward(s.inverse(c)) - c).cwiseAbs().maxCoeff(), 1e-8);
    for (int m = -1; m <= 1; ++m) {
      Eigen::VectorXd sig(64);
      for (int i = 0; i < 64; ++i) sig(i) = eval_real_sh(1, s.directions()[i])(m + 1);
      Eigen::VectorXd expect = Eigen::VectorXd::Zero(sh_count(L));
      expect(sh_offset(1) + m + 1) = 1.0;
      EXPECT_LT((s.forward(sig) - expect).cwiseAbs().maxCoeff(), 1e-10);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(s.forward_matrix());
    EXPECT_GT(svd.singularValues().minCoeff(), 1e-6);
  }
}

TEST(SphereSampling, DegenerateLayoutThrows) {
  EXPECT_THROW(SphereSampling(3, 8), DegenerateInputError);
  std::vector<Vec3> ring;
  for (int i = 0; i < 64; ++i) ring.emplace_back(std::cos(i * 0.1), std::sin(i * 0.1), 0.0);
  EXPECT_THROW(SphereSampling(2, ring), DegenerateInputError);
}

TEST(Svd3, IdentityDiagonalRandom) {
  auto s = svd3(Mat3::Identity());
  EXPECT_LT((s.S - Vec3::Ones()).norm(), 1e-15);
  EXPECT_LT((s.U * s.V.transpose() - Mat3::Identity()).norm(), 1e-14);
  Mat3 d = Vec3(3, 2, 1).asDiagonal();
  EXPECT_LT((svd3(d).S - Vec3(3, 2, 1)).norm(), 1e-14);
  Rng rng(13);
  for (int i = 0; i < 50; ++i) {
    Mat3 m;
    for (int k = 0; k < 9; ++k) m(k / 3, k % 3) = rng.uniform(-1, 1);
    auto r = svd3(m);
    EXPECT_LT((r.U * r.S.asDiagonal() * r.V.transpose() - m).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GE(r.S(0), r.S(1));
    EXPECT_GE(r.S(1), r.S(2));
    EXPECT_GE(r.S(2), 0.0);
    EXPECT_TRUE(is_rotation(nearest_rotation(m), 1e-12));
  }
  EXPECT_TRUE(is_rotation(nearest_rotation(Mat3::Zero()), 1e-12));
}
