#include "oracles.hpp"
#include "tdgeo/mrp.hpp"
#include "tdgeo/mrp_io.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace tdgeo;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::InvalidArgument;
}

Matrix two_cycle() {
  Matrix p(2, 2);
  p << 0, 1, 1, 0;
  return p;
}

}  // namespace

TEST(Validate, AcceptsPositiveChain) {
  const auto cert = validate(random_mrp(4, 0.9, 1).P());
  EXPECT_TRUE(cert.valid());
  EXPECT_EQ(cert.scc_count, 1);
  EXPECT_EQ(cert.period, 1);
}

TEST(Validate, RejectsBadRowsAndStructure) {
  Matrix p(2, 2);
  p << 0.5, 0.6, 0.5, 0.5;
  EXPECT_EQ(*validate(p).failure, ErrorCode::NotStochastic);
  p << 1.2, -0.2, 0.5, 0.5;
  EXPECT_EQ(*validate(p).failure, ErrorCode::NotStochastic);
  EXPECT_EQ(*validate(Matrix::Identity(3, 3)).failure, ErrorCode::Reducible);
  const auto periodic = validate(two_cycle());
  EXPECT_EQ(*periodic.failure, ErrorCode::Periodic);
  EXPECT_EQ(periodic.period, 2);
}

TEST(Mrp, ConstructorRaisesCertificateFailure) {
  EXPECT_EQ(code_of([] { MarkovRewardProcess(two_cycle(), Vector(Vector::Zero(2)), 0.9); }),
            ErrorCode::Periodic);
  EXPECT_EQ(code_of([] {
              MarkovRewardProcess(Matrix(Matrix::Constant(2, 2, 0.5)), Vector(Vector::Zero(3)), 0.9);
            }),
            ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([] {
              MarkovRewardProcess(Matrix(Matrix::Constant(2, 2, 0.5)), Vector(Vector::Zero(2)), 1.0);
            }),
            ErrorCode::InvalidArgument);
}

TEST(Stationary, MatchesPowerIteration) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto mrp = random_mrp(2 + seed % 6, 0.9, seed);
    const Vector mu = stationary_distribution(mrp);
    EXPECT_LT((mu - oracle::power_iteration_stationary(mrp.P())).lpNorm<1>(), 1e-12);
    EXPECT_LT((mrp.P().transpose() * mu - mu).norm(), 1e-12);
    EXPECT_NEAR(mu.sum(), 1.0, 1e-14);
  }
}

TEST(Stationary, CycleIsUniform) {
  const Vector mu = stationary_distribution(cycle_mrp(3, 0.0));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mu(i), 1.0 / 3.0, 1e-15);
}

TEST(Value, MatchesNeumannSeries) {
  for (double gamma : {0.5, 0.9, 0.99}) {
    const auto mrp = random_mrp(5, gamma, 11);
    const Vector v = true_value(mrp);
    const Vector r = expected_reward(mrp);
    EXPECT_LT((v - oracle::neumann_value(mrp.P(), r, gamma)).norm(), 1e-9 * v.norm());
    EXPECT_LT((v - r - gamma * mrp.P() * v).norm(), 1e-12 * v.norm());
  }
}

TEST(Value, RewardMatrixIsAveragedOverTransitions) {
  Matrix p(2, 2);
  p << 0.25, 0.75, 0.5, 0.5;
  Matrix r(2, 2);
  r << 4.0, 8.0, -2.0, 2.0;
  const MarkovRewardProcess mrp(p, r, 0.5);
  const Vector rbar = expected_reward(mrp);
  EXPECT_NEAR(rbar(0), 0.25 * 4 + 0.75 * 8, 1e-15);
  EXPECT_NEAR(rbar(1), 0.0, 1e-15);
}

TEST(MuNorm, TransitionIsNonExpansive) {
  std::mt19937 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto mrp = random_mrp(6, 0.9, seed);
    const Vector mu = stationary_distribution(mrp);
    for (int i = 0; i < 200; ++i) {
      Vector v(6);
      for (int k = 0; k < 6; ++k) v(k) = normal(rng);
      EXPECT_LE(mu_norm(mu, mrp.P() * v), mu_norm(mu, v) * (1 + 1e-14));
    }
  }
}

TEST(Geometry, PartsAndRadius) {
  const auto mrp = random_mrp(4, 0.9, 3);
  const auto g = td_matrix(mrp);
  const Matrix d = stationary_distribution(mrp).asDiagonal();
  EXPECT_TRUE(g.A.isApprox(d * (Matrix::Identity(4, 4) - 0.9 * mrp.P())));
  EXPECT_TRUE((g.S_A + g.R_A).isApprox(g.A));
  EXPECT_GT(g.lambda_min_S_A, 0.0);
  EXPECT_NEAR(g.B, mu_norm(g.mu, g.R) / 0.1, 1e-12);
}

TEST(Geometry, CycleSpectrumOfA) {
  // A = (1/3)(I - 0.9 P) with P = (I + C)/2 for the backward shift C, so the
  // nonreal pair is (1/3)(1 - 0.45 - 0.45 e^{2 pi i / 3}).
  const auto g = td_matrix(cycle_mrp(3, 0.0));
  const double re = (1.0 - 0.45 + 0.225) / 3.0;
  const double im = 0.45 * std::sqrt(3.0) / 2.0 / 3.0;
  const auto ev = linalg::eigenvalues(g.A);
  int complex_count = 0;
  for (const auto& z : ev)
    if (std::abs(z.imag()) > 1e-12) {
      ++complex_count;
      EXPECT_NEAR(z.real(), re, 1e-13);
      EXPECT_NEAR(std::abs(z.imag()), im, 1e-13);
    }
  EXPECT_EQ(complex_count, 2);
}

TEST(KStep, MatchesPowerLoop) {
  const auto g = td_matrix(random_mrp(4, 0.9, 8));
  EXPECT_EQ(k_step_matrix(g, 1).A, g.A);
  for (int k : {2, 5, 10}) {
    const Matrix want = g.D_mu * (Matrix::Identity(4, 4) - oracle::matrix_power(0.9 * g.P, k));
    EXPECT_LT((k_step_matrix(g, k).A - want).norm(), 1e-14);
  }
  EXPECT_THROW(k_step_matrix(g, 0), Error);
}

TEST(Cycle, DeltaQuarterIsSymmetric) {
  const auto m = cycle_mrp(3, 0.25);
  EXPECT_TRUE(m.P().isApprox(m.P().transpose()));
  const auto fig = cycle_mrp(3, 0.0);
  EXPECT_DOUBLE_EQ(fig.P()(1, 0), 0.5);  // s -> s - 1
  EXPECT_DOUBLE_EQ(fig.P()(0, 2), 0.5);
}

TEST(Mrp, RowsWithinToleranceAreRenormalized) {
  Matrix p(2, 2);
  p << 0.3 + 5e-13, 0.7, 0.5, 0.5;
  const MarkovRewardProcess mrp(p, Vector(Vector::Zero(2)), 0.9);
  EXPECT_NEAR(mrp.P().row(0).sum(), 1.0, 1e-15);
}

TEST(Random, Deterministic) {
  EXPECT_EQ(random_mrp(5, 0.9, 42).P(), random_mrp(5, 0.9, 42).P());
  EXPECT_NE(random_mrp(5, 0.9, 42).P(), random_mrp(5, 0.9, 43).P());
}

TEST(MrpJson, RoundTripIsExactAndByteStable) {
  const auto mrp = random_mrp(4, 0.99, 17);
  const std::string text = io::mrp_to_string(mrp);
  const auto back = io::mrp_from_string(text);
  EXPECT_EQ(back.P(), mrp.P());
  EXPECT_EQ(std::get<Vector>(back.reward()), std::get<Vector>(mrp.reward()));
  EXPECT_EQ(back.gamma(), mrp.gamma());
  EXPECT_EQ(io::mrp_to_string(back), text);
}

TEST(MrpJson, RewardMatrixRoundTrip) {
  Matrix r(2, 2);
  r << 1, 2, 3, 4;
  const MarkovRewardProcess mrp(Matrix(Matrix::Constant(2, 2, 0.5)), r, 0.9);
  const auto back = io::mrp_from_string(io::mrp_to_string(mrp));
  EXPECT_EQ(std::get<Matrix>(back.reward()), r);
}

TEST(MrpJson, ParseErrorCarriesLineAndColumn) {
  try {
    io::mrp_from_string("{\n  \"n\": 2,\n  \"P\": [[1, 0],\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("column"), std::string::npos);
  }
}

TEST(MrpJson, MissingFieldAndBadShape) {
  EXPECT_EQ(code_of([] { io::mrp_from_string(R"({"n": 2, "P": [[1,0],[0,1]], "gamma": 0.9})"); }),
            ErrorCode::ParseError);
  EXPECT_EQ(code_of([] {
              io::mrp_from_string(
                  R"({"n": 3, "P": [[0.5,0.5],[0.5,0.5]], "reward": {"vector": [0,0]}, "gamma": 0.9})");
            }),
            ErrorCode::ShapeMismatch);
}
