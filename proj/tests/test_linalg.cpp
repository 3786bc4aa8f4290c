#include "oracles.hpp"
#include "tdgeo/linalg.hpp"

#include <gtest/gtest.h>

#include <random>

using tdgeo::Matrix;
using tdgeo::Vector;
namespace la = tdgeo::linalg;

namespace {

Matrix random_matrix(int n, double scale, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = normal(rng);
  return m;
}

}  // namespace

TEST(Expm, MatchesTaylorAcrossNorms) {
  for (double scale : {1e-3, 0.1, 1.0, 5.0, 20.0}) {
    for (unsigned seed = 0; seed < 5; ++seed) {
      const Matrix a = random_matrix(4, scale, seed);
      const Matrix want = oracle::taylor_expm(a);
      const Matrix got = la::expm(a);
      EXPECT_LT((got - want).norm() / want.norm(), 1e-11) << "scale " << scale;
    }
  }
}

TEST(Expm, ZeroAndDiagonal) {
  EXPECT_TRUE(la::expm(Matrix::Zero(3, 3)).isApprox(Matrix::Identity(3, 3)));
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << -2.0, 0.5, 3.0;
  const Matrix e = la::expm(d);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(e(i, i), std::exp(d(i, i)), 1e-13 * std::exp(3.0));
}

TEST(Expm, AntisymmetricGivesRotation) {
  const Matrix k = la::antisymmetric_part(random_matrix(5, 2.0, 7));
  const Matrix q = la::expm(k);
  EXPECT_LT((q.transpose() * q - Matrix::Identity(5, 5)).norm(), 1e-12);
}

TEST(Parts, SymmetricPlusAntisymmetric) {
  const Matrix a = random_matrix(4, 1.0, 3);
  const Matrix s = la::symmetric_part(a);
  const Matrix r = la::antisymmetric_part(a);
  EXPECT_TRUE((s + r).isApprox(a));
  EXPECT_TRUE(s.isApprox(s.transpose()));
  EXPECT_TRUE(r.isApprox(-r.transpose()));
}

TEST(Eigen, SymmetricExtremes) {
  Matrix s(2, 2);
  s << 2.0, 1.0, 1.0, 2.0;
  EXPECT_NEAR(la::lambda_min_symmetric(s), 1.0, 1e-14);
  EXPECT_NEAR(la::lambda_max_symmetric(s), 3.0, 1e-14);
}

TEST(Rank, NumericalRank) {
  Matrix m(3, 2);
  m << 1, 2, 2, 4, 3, 6;
  EXPECT_EQ(la::numerical_rank(m), 1);
  m(0, 1) = 0.0;
  EXPECT_EQ(la::numerical_rank(m), 2);
}

TEST(ComplexPairs, RotationGenerator) {
  Matrix a(2, 2);
  a << 0.3, 0.7, -0.7, 0.3;
  const auto pairs = la::complex_eigenpairs(a);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_NEAR(pairs[0].value.real(), 0.3, 1e-14);
  EXPECT_NEAR(pairs[0].value.imag(), 0.7, 1e-14);
  const Eigen::VectorXcd av = a.cast<std::complex<double>>() * pairs[0].vector;
  EXPECT_LT((av - pairs[0].value * pairs[0].vector).norm(), 1e-13);
}

TEST(ComplexPairs, RealSpectrumIsEmpty) {
  Matrix a(2, 2);
  a << 2.0, 1.0, 1.0, 3.0;
  EXPECT_TRUE(la::complex_eigenpairs(a).empty());
}

TEST(Complement, OrthonormalAndOrthogonal) {
  Matrix m(4, 2);
  m << 1, 0, 1, 1, 0, 1, 2, 0;
  const Matrix c = la::orthogonal_complement(m);
  ASSERT_EQ(c.cols(), 2);
  EXPECT_LT((c.transpose() * c - Matrix::Identity(2, 2)).norm(), 1e-13);
  EXPECT_LT((m.transpose() * c).norm(), 1e-13);
}

TEST(Orthonormalize, KeepsOrientationAndSpan) {
  Matrix m(3, 2);
  m << 1, 1, 0, 1, 0, 0;
  const Matrix q = la::orthonormalize(m);
  EXPECT_LT((q.transpose() * q - Matrix::Identity(2, 2)).norm(), 1e-14);
  EXPECT_GT(q.col(0).dot(m.col(0)), 0.0);
  EXPECT_GT(q.col(1).dot(m.col(1)), 0.0);
  // Columns of m lie in span(q).
  EXPECT_LT((q * (q.transpose() * m) - m).norm(), 1e-13);
}
