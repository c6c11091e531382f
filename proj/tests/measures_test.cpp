#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "monocert/measures.hpp"
#include "oracles.hpp"

namespace monocert {
namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix A(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) A(i, j++) = v;
    ++i;
  }
  return A;
}

oracle::Mat to_oracle(const Matrix& A) {
  oracle::Mat M(static_cast<std::size_t>(A.rows()), std::vector<double>(static_cast<std::size_t>(A.cols())));
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) M[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = A(i, j);
  }
  return M;
}

Matrix random_matrix(std::mt19937_64& rng, int n, double scale = 3.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix A(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) A(i, j) = u(rng);
  }
  return A;
}

GTEST_TEST(MeasuresTest, Examples) {
  const Matrix A = mat({{-1, 2}, {0, -1}});
  EXPECT_EQ(mu1(A), 1.0);
  EXPECT_EQ(mu_inf(A), 1.0);
  EXPECT_NEAR(oracle::limit_quotient(to_oracle(A), true), 1.0, 1e-6);
  EXPECT_NEAR(oracle::limit_quotient(to_oracle(A), false), 1.0, 1e-6);
  EXPECT_EQ(mu1(-Matrix::Identity(2, 2)), -1.0);
  EXPECT_EQ(mu1(Matrix::Zero(3, 3)), 0.0);
  EXPECT_EQ(mu_inf(Matrix::Zero(3, 3)), 0.0);
  EXPECT_EQ(mu_inf(mat({{-2, 1}, {1, -2}})), -1.0);
}

GTEST_TEST(MeasuresTest, Metzler) {
  EXPECT_TRUE(is_metzler(mat({{-1, 2}, {0, -1}})));
  EXPECT_FALSE(is_metzler(mat({{0, -0.5}, {1, 0}})));
  EXPECT_TRUE(is_metzler(mat({{-5, 0}, {0, 7}})));
  EXPECT_TRUE(is_metzler(mat({{0, -1e-10}, {0, 0}})));
  EXPECT_FALSE(is_metzler(mat({{0, -1e-10}, {0, 0}}), 0.0));
}

GTEST_TEST(MeasuresTest, LimitDefinitionAgreement) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix A = random_matrix(rng, 2 + trial % 4);
    EXPECT_NEAR(oracle::limit_quotient(to_oracle(A), true), mu1(A), 1e-6);
    EXPECT_NEAR(oracle::limit_quotient(to_oracle(A), false), mu_inf(A), 1e-6);
  }
}

GTEST_TEST(MeasuresTest, SubadditiveAndHomogeneous) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> uc(0.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 4;
    const Matrix A = random_matrix(rng, n);
    const Matrix B = random_matrix(rng, n);
    for (Norm norm : {Norm::kL1, Norm::kLinf}) {
      EXPECT_LE(mu(A + B, norm), mu(A, norm) + mu(B, norm) + 1e-12);
      const double c = uc(rng);
      EXPECT_NEAR(mu(c * A, norm), c * mu(A, norm), 1e-12 * std::max(1.0, std::abs(c * mu(A, norm))));
    }
  }
}

GTEST_TEST(MeasuresTest, NegativeMeasureImpliesHurwitz) {
  std::mt19937_64 rng(3);
  int negative = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix A = random_matrix(rng, 4, 1.0);
    A.diagonal().array() -= 2.5;
    const double lam = oracle::max_real_eigenvalue(to_oracle(A));
    for (Norm norm : {Norm::kL1, Norm::kLinf}) {
      if (mu(A, norm) < 0) {
        ++negative;
        EXPECT_LT(lam, 0.0);
      }
      // The measure bounds every eigenvalue's real part.
      EXPECT_LE(lam, mu(A, norm) + 1e-9);
    }
  }
  EXPECT_GT(negative, 10);
}

GTEST_TEST(MeasuresTest, EigenOracleSanity) {
  // Multiagent Jacobian: slowest mode about -0.1607.
  const oracle::Mat J{{-2, 0, 1}, {1, -2, 1}, {0, 1, -1}};
  EXPECT_NEAR(oracle::max_real_eigenvalue(J), -0.16071, 1e-4);
  const oracle::Mat R{{0, -1}, {1, 0}};
  EXPECT_NEAR(oracle::max_real_eigenvalue(R), 0.0, 1e-12);
}

GTEST_TEST(MeasuresTest, WeightedJacobianExample) {
  const WeightFamily theta(WeightKind::kTheta, {ScalarWeight::constant(1), ScalarWeight::polynomial({1, 1})});
  const Matrix J = mat({{-1, 2}, {0, -1}});
  const std::vector<double> x{0, 1};
  const std::vector<double> f{1, -1};  // f(0, 1) = (-0 + 1, -1)
  const Matrix Jt = weighted_jacobian(J, theta, x, f);
  EXPECT_TRUE(Jt.isApprox(mat({{-1, 1}, {0, -1.5}}), 1e-15)) << Jt;
  EXPECT_DOUBLE_EQ(mu1(Jt), -0.5);
}

GTEST_TEST(MeasuresTest, WeightedJacobianSpecialCases) {
  std::mt19937_64 rng(4);
  const Matrix J = random_matrix(rng, 3);
  const std::vector<double> x{0.1, 0.2, 0.3};
  const std::vector<double> f{1.0, -2.0, 0.5};
  const WeightFamily unit = WeightFamily::constant(WeightKind::kTheta, {1, 1, 1});
  EXPECT_TRUE(weighted_jacobian(J, unit, x, f).isApprox(J, 1e-15));

  const WeightFamily v = WeightFamily::constant(WeightKind::kTheta, {1, 2, 4});
  const Matrix D = Vector::Map(std::vector<double>{1, 2, 4}.data(), 3).asDiagonal();
  EXPECT_TRUE(weighted_jacobian(J, v, x, f).isApprox(D * J * D.inverse(), 1e-14));

  // Omega families weight by the reciprocal.
  const WeightFamily w = WeightFamily::constant(WeightKind::kOmega, {1, 0.5, 0.25});
  EXPECT_TRUE(weighted_jacobian(J, w, x, f).isApprox(D * J * D.inverse(), 1e-14));

  const WeightFamily bad = WeightFamily::constant(WeightKind::kTheta, {1, -1, 1});
  EXPECT_THROW(weighted_jacobian(J, bad, x, f), InvalidArgument);
}

GTEST_TEST(MeasuresTest, WeightedJacobianPreservesMetzler) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  const WeightFamily theta(WeightKind::kTheta, {ScalarWeight::polynomial({1, 1}), ScalarWeight::polynomial({2, 0, 1}),
                                                ScalarWeight::reciprocal({1, 0.5})});
  for (int trial = 0; trial < 50; ++trial) {
    Matrix J = random_matrix(rng, 3).cwiseAbs();
    J.diagonal() *= -1.0;
    const std::vector<double> x{u(rng), u(rng), u(rng)};
    const std::vector<double> f{u(rng) - 1, u(rng) - 1, u(rng) - 1};
    const Matrix Jt = weighted_jacobian(J, theta, x, f);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        if (i != j) {
          EXPECT_GE(Jt(i, j), -1e-12);
        }
      }
    }
  }
}

}  // namespace
}  // namespace monocert
