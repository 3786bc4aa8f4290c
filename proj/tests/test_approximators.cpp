#include "oracles.hpp"
#include "tdgeo/approximators.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace tdgeo;

namespace {

Matrix fd_of(const Approximator& approx, const Vector& theta, double h = 1e-6) {
  return oracle::fd_jacobian([&](const Vector& t) { return approx.value(t); }, theta, h);
}

Vector gaussian(Index d, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(d);
  for (Index i = 0; i < d; ++i) v(i) = normal(rng);
  return v;
}

}  // namespace

TEST(Tabular, IdentityMap) {
  const TabularApproximator tab(3);
  const Vector th = gaussian(3, 1);
  EXPECT_EQ(tab.value(th), th);
  EXPECT_EQ(tab.jacobian(th), Matrix::Identity(3, 3));
  EXPECT_THROW(tab.value(Vector::Zero(2)), Error);
}

TEST(Linear, FixedPointSolvesProjectedEquation) {
  const auto g = td_matrix(random_mrp(6, 0.9, 4));
  const Matrix phi = random_features(6, 3, 9);
  const auto fp = linear_fixed_point(phi, g);
  // Phi^T A (Phi theta* - V*) = 0, checked directly.
  EXPECT_LT((phi.transpose() * g.A * (phi * fp.theta_star - g.V_star)).norm(), 1e-12);
  EXPECT_LE(fp.error, fp.bound);
}

TEST(Linear, ProjectionIsMuOrthogonal) {
  const Vector mu = (Vector(4) << 0.1, 0.2, 0.3, 0.4).finished();
  const Matrix phi = random_features(4, 2, 2);
  const Matrix pi = mu_projection(phi, mu);
  EXPECT_LT((pi * pi - pi).norm(), 1e-12);
  EXPECT_LT((pi * phi - phi).norm(), 1e-12);
  const Vector v = gaussian(4, 3);
  const Vector resid = v - pi * v;
  EXPECT_LT((phi.transpose() * mu.asDiagonal() * resid).norm(), 1e-12);
}

TEST(Linear, RankDeficientFeaturesRejected) {
  const auto g = td_matrix(random_mrp(4, 0.9, 1));
  Matrix phi(4, 2);
  phi << 1, 2, 1, 2, 1, 2, 1, 2;
  EXPECT_THROW(linear_fixed_point(phi, g), Error);
}

class NetworkShapes
    : public ::testing::TestWithParam<std::tuple<Activation, std::vector<Index>>> {};

TEST_P(NetworkShapes, JacobianMatchesFiniteDifferences) {
  const auto [act, dims] = GetParam();
  const auto net = homogeneous_network(dims, random_features(5, dims.front(), 3), act, 7);
  for (const auto& th : kink_free_samples(*net, 5, 11, 1.0, 1e-2)) {
    const Matrix j = net->jacobian(th);
    const Matrix fd = fd_of(*net, th, 1e-7);
    EXPECT_LT((j - fd).norm(), 1e-5 * std::max(1.0, j.norm()));
  }
}

TEST_P(NetworkShapes, EulerAndPerLayerIdentities) {
  const auto [act, dims] = GetParam();
  const auto net = homogeneous_network(dims, random_features(5, dims.front(), 3), act, 7);
  // Degree from the layer structure: sum_i p^{L-i+1}.
  const double p = act == Activation::Square ? 2.0 : 1.0;
  double want_degree = 0.0;
  for (int i = 1; i <= net->depth(); ++i) want_degree += std::pow(p, net->depth() - i + 1);
  EXPECT_DOUBLE_EQ(*net->degree(), want_degree);
  const auto samples = kink_free_samples(*net, 10, 5);
  const auto rep = check_homogeneity(*net, want_degree, samples, {0.5, 2.0}, 1e-9);
  EXPECT_TRUE(rep.passed) << rep.max_scaling_error << " " << rep.max_euler_error;
  for (const auto& th : samples) EXPECT_LT(per_layer_identity_error(*net, th), 1e-9);
}

INSTANTIATE_TEST_SUITE_P(
    Depths, NetworkShapes,
    ::testing::Values(std::make_tuple(Activation::Square, std::vector<Index>{3, 1}),
                      std::make_tuple(Activation::Square, std::vector<Index>{3, 4, 1}),
                      std::make_tuple(Activation::Square, std::vector<Index>{3, 4, 2, 1}),
                      std::make_tuple(Activation::Relu, std::vector<Index>{3, 1}),
                      std::make_tuple(Activation::Relu, std::vector<Index>{3, 4, 1}),
                      std::make_tuple(Activation::Relu, std::vector<Index>{3, 4, 2, 1})));

TEST(Homogeneous, SquareDepthTwoClosedForm) {
  // f = (sigma(Phi W1) w2)^2 elementwise with sigma(x) = x^2.
  const Matrix phi = random_features(4, 2, 1);
  const auto net = homogeneous_network({2, 3, 1}, phi, Activation::Square, 2);
  const Vector th = net->initial_theta();
  Matrix w1(2, 3);
  for (Index c = 0; c < 3; ++c)
    for (Index r = 0; r < 2; ++r) w1(r, c) = th(c * 2 + r);
  const Vector w2 = th.tail(3);
  const Vector inner = ((phi * w1).array().square().matrix() * w2);
  const Vector want = inner.array().square();
  // Column-major packing is one valid convention; accept either layout.
  Matrix w1_row(2, 3);
  for (Index r = 0; r < 2; ++r)
    for (Index c = 0; c < 3; ++c) w1_row(r, c) = th(r * 3 + c);
  const Vector want_row = ((phi * w1_row).array().square().matrix() * w2).array().square();
  const Vector got = net->value(th);
  EXPECT_TRUE(got.isApprox(want, 1e-12) || got.isApprox(want_row, 1e-12));
}

TEST(Homogeneous, NonHomogeneousFamiliesFailCheck) {
  const auto inner = homogeneous_network({2, 3, 1}, random_features(4, 2, 1), Activation::Square, 1);
  const ResidualNetwork res(random_features(4, 1, 2), inner);
  const auto samples = kink_free_samples(res, 5, 3);
  EXPECT_FALSE(check_homogeneity(res, *inner->degree(), samples, {2.0}).passed);
  const PerturbedTabular pt(0.5, unit_mixing_matrix(4, 1));
  EXPECT_FALSE(check_homogeneity(pt, 1.0, kink_free_samples(pt, 5, 3), {2.0}).passed);
}

TEST(Residual, JacobianAndInitialization) {
  const auto inner = homogeneous_network({2, 3, 1}, random_features(4, 2, 1), Activation::Square, 1);
  const ResidualNetwork res(random_features(4, 2, 2), inner);
  const Vector th0 = res.initial_theta();
  EXPECT_TRUE(th0.head(2).isZero());
  EXPECT_EQ(th0.tail(inner->param_dim()), inner->initial_theta());
  const Vector th = gaussian(res.param_dim(), 8);
  EXPECT_LT((res.jacobian(th) - fd_of(res, th)).norm(), 1e-6 * res.jacobian(th).norm());
}

TEST(Perturbed, SingularValuesInBand) {
  const double beta = 0.4;
  const PerturbedTabular pt(beta, unit_mixing_matrix(5, 3));
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Vector th = gaussian(5, s, 3.0);
    const auto sv = linalg::singular_values(pt.jacobian(th));
    EXPECT_GE(sv.minCoeff(), 1 - beta - 1e-12);
    EXPECT_LE(sv.maxCoeff(), 1 + beta + 1e-12);
    EXPECT_LT((pt.jacobian(th) - fd_of(pt, th)).norm(), 1e-7);
  }
}

TEST(Divergent, CycleEigenpairAndConstants) {
  const auto g = td_matrix(cycle_mrp(3, 0.0));
  const auto d = construct_divergent(g);
  const auto& p = d->parts();
  EXPECT_NEAR(p.a, 0.775 / 3.0, 1e-12);
  EXPECT_NEAR(std::abs(p.b), 0.45 * std::sqrt(3.0) / 6.0, 1e-12);
  // A U = U Lambda.
  Matrix lam(2, 2);
  lam << p.a, p.b, -p.b, p.a;
  EXPECT_LT((g.A * p.U - p.U * lam).norm(), 1e-12);
  EXPECT_GT(p.epsilon, 0.0);
  EXPECT_LE(p.epsilon, 0.5 * (p.a * p.a + p.b * p.b) / p.C + 1e-15);
}

TEST(Divergent, NormGrowsExponentially) {
  const auto g = td_matrix(cycle_mrp(3, 0.0));
  const auto d = construct_divergent(g);
  const double base = d->parts().V0.norm();
  for (double th : {-3.0, 0.0, 2.0, 10.0}) {
    const Vector v = d->value(Vector::Constant(1, th));
    EXPECT_NEAR(v.norm(), std::exp(d->parts().epsilon * th) * base, 1e-10 * v.norm());
  }
}

TEST(Divergent, QuadraticFormOnEigenplane) {
  // V^T Q^T A V = -(a^2 + b^2)|z|^2 for V = U z.
  const auto g = td_matrix(random_mrp(5, 0.9, 500));
  const auto d = construct_divergent(g);
  const auto& p = d->parts();
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Vector z = gaussian(2, s);
    const Vector v = p.U * z;
    EXPECT_NEAR(v.dot(p.Q.transpose() * g.A * v), -(p.a * p.a + p.b * p.b) * z.squaredNorm(),
                1e-10 * z.squaredNorm());
  }
}

TEST(Divergent, ParameterDriftIsPositiveOnTheSpiral) {
  // With zero reward, d th/dt = -J^T A V is positive everywhere on the orbit.
  const auto g = td_matrix(cycle_mrp(3, 0.0));
  const auto d = construct_divergent(g);
  for (double th = -20.0; th <= 20.0; th += 0.37) {
    const Vector t = Vector::Constant(1, th);
    EXPECT_GT(-(d->jacobian(t).transpose() * g.A * d->value(t))(0), 0.0) << th;
  }
}

TEST(Divergent, JacobianAndExtension) {
  const auto g = td_matrix(random_mrp(5, 0.9, 500));
  const auto d = construct_divergent(g, 0.5, V0Mode::Sum, 2);
  EXPECT_EQ(d->param_dim(), 3);
  const Vector th = gaussian(3, 1);
  EXPECT_LT((d->jacobian(th) - fd_of(*d, th)).norm(), 1e-6 * d->jacobian(th).norm());
  EXPECT_EQ(linalg::numerical_rank(d->jacobian(th)), 3);
  // Extension directions are invisible to the drive on E.
  EXPECT_LT((d->parts().U.transpose() * g.A * d->parts().W).norm(), 1e-12);
}

TEST(Divergent, RealSpectrumRejected) {
  const auto g = td_matrix(cycle_mrp(3, 0.25));
  try {
    construct_divergent(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoComplexEigenvalue);
  }
}

TEST(Divergent, RangeGuard) {
  const auto d = construct_divergent(td_matrix(cycle_mrp(3, 0.0)));
  const double far = 701.0 / d->parts().epsilon;
  EXPECT_THROW(d->value(Vector::Constant(1, far)), Error);
}

TEST(Json, RoundTripEachKind) {
  const auto g = td_matrix(cycle_mrp(4, 0.1));
  const auto inner = homogeneous_network({2, 3, 1}, random_features(4, 2, 1), Activation::Relu, 1);
  std::vector<ApproximatorPtr> all = {
      std::make_shared<TabularApproximator>(4),
      std::make_shared<LinearApproximator>(random_features(4, 2, 5)),
      inner,
      std::make_shared<ResidualNetwork>(random_features(4, 1, 2), inner),
      std::make_shared<PerturbedTabular>(0.3, unit_mixing_matrix(4, 2)),
      construct_divergent(g),
      construct_divergent(g, 0.3, V0Mode::U2, 1),
  };
  for (const auto& a : all) {
    const auto back = approximator_from_json(a->to_json(), &g);
    EXPECT_EQ(back->kind(), a->kind());
    ASSERT_EQ(back->param_dim(), a->param_dim()) << a->kind();
    const Vector th = gaussian(a->param_dim(), 4, 0.5);
    EXPECT_TRUE(back->value(th).isApprox(a->value(th), 1e-14)) << a->kind();
  }
}

TEST(Json, DivergentBuiltFromGeometry) {
  const auto g = td_matrix(cycle_mrp(3, 0.0));
  const auto a = approximator_from_json({{"kind", "divergent"}, {"epsilon_fraction", 0.5}}, &g);
  const auto ref = construct_divergent(g);
  EXPECT_TRUE(a->value(Vector::Ones(1)).isApprox(ref->value(Vector::Ones(1))));
  EXPECT_THROW(approximator_from_json({{"kind", "divergent"}}), Error);
  EXPECT_THROW(approximator_from_json({{"kind", "bogus"}}), Error);
}
