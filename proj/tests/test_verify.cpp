#include "tdgeo/verify.hpp"

#include <gtest/gtest.h>

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

}  // namespace

TEST(Theorem1, SquareNetworkEntersBall) {
  const auto f = homogeneous_fixture(1, 11, Activation::Square);
  auto flow = network_flow(Activation::Square);
  flow.theta0 = f.theta0;
  const auto r = verify_theorem1(f.net, f.geometry, flow);
  EXPECT_TRUE(r.passed()) << to_json(r).dump(2);
  EXPECT_LE(r.measured.at("liminf_norm_mu"), f.geometry.B * (1 + 1e-3));
}

TEST(Theorem1, StartsOutsideTheBall) {
  const auto f = homogeneous_fixture(2, 12, Activation::Relu);
  EXPECT_NEAR(mu_norm(f.geometry.mu, f.net->value(f.theta0)), 3.0 * f.geometry.B,
              1e-9 * f.geometry.B);
}

TEST(Theorem1, LinearIsDegreeOne) {
  const auto g = td_matrix(random_mrp(5, 0.9, 3));
  const auto lin = std::make_shared<LinearApproximator>(random_features(5, 2, 4));
  FlowConfig fc;
  fc.theta0 = Vector::Constant(2, 10.0);
  fc.integrator.t_max = 500.0;
  EXPECT_TRUE(verify_theorem1(lin, g, fc).passed());
}

TEST(Theorem1, RejectsNonHomogeneous) {
  const auto f = residual_fixture(4, 1, 3);
  EXPECT_EQ(code_of([&] { verify_theorem1(f.net, f.geometry); }), ErrorCode::NotHomogeneous);
}

TEST(Theorem1, NegatedDriveFails) {
  const auto f = homogeneous_fixture(1, 11, Activation::Square);
  auto flow = network_flow(Activation::Square);
  flow.theta0 = f.theta0;
  const auto r = verify_theorem1(f.net, negated_drive(f.geometry), flow);
  EXPECT_TRUE(r.failed());
}

TEST(BiHoelder, LinearAndDegenerate) {
  const auto g = td_matrix(random_mrp(4, 0.9, 0));
  const auto lin = std::make_shared<LinearApproximator>(random_features(4, 2, 1));
  const auto k = estimate_bihoelder(*lin, g, 0, 2000);
  EXPECT_GT(k.c, 0.0);
  EXPECT_LT(k.c, k.C);
  EXPECT_EQ(k.s, 1.0);
  FlowConfig fc;
  fc.integrator.t_max = 500.0;
  EXPECT_TRUE(verify_bihoelder(lin, g, fc, 0).passed());
  // ReLU(theta) vanishes on the negative orthant: no lower constant exists.
  Matrix id = Matrix::Identity(4, 4);
  const auto wide = std::make_shared<HomogeneousNetwork>(std::vector<Index>{4, 1}, id,
                                                         Activation::Relu, Vector::Ones(4));
  EXPECT_EQ(code_of([&] { estimate_bihoelder(*wide, g, 1, 5000); }),
            ErrorCode::ConstantEstimationFailed);
}

TEST(Theorem2, BothRanks) {
  for (Index rank : {1, 2}) {
    const auto f = residual_fixture(4, rank, 20 + rank);
    const auto reps = verify_theorem2_and_corollary(f.net, f.geometry,
                                                    network_flow(Activation::Square));
    ASSERT_EQ(reps.size(), 2u);
    EXPECT_EQ(reps[0].claim_id, "T2");
    EXPECT_EQ(reps[1].claim_id, "C1");
    EXPECT_TRUE(reps[0].passed()) << to_json(reps[0]).dump(2);
    EXPECT_TRUE(reps[1].passed()) << to_json(reps[1]).dump(2);
  }
}

TEST(Theorem3, TabularAndCalibrated) {
  const auto g = td_matrix(rewarded_spiral_chain());
  FlowConfig fc;
  fc.integrator.t_max = 5000.0;
  fc.theta0 = Vector::Zero(3);
  EXPECT_TRUE(verify_theorem3(std::make_shared<TabularApproximator>(3), g, fc).passed());
  const auto cal = calibrate_perturbed_tabular(g, 0, *fc.theta0);
  EXPECT_GT(cal.beta, 0.0);
  EXPECT_LT(cal.max_sampled_kappa, cal.rho);
  const double band = std::pow((1 + cal.beta) / (1 - cal.beta), 2);
  EXPECT_LE(cal.max_sampled_kappa, band * (1 + 1e-12));
  const auto r = verify_theorem3(cal.approx, g, fc);
  EXPECT_TRUE(r.passed()) << to_json(r).dump(2);
}

TEST(Theorem3, ViolatedConditionIsReported) {
  // The spiral family has kappa = inf (rank-deficient kernel) on a 3-state chain.
  const auto g = td_matrix(spiral_chain());
  const auto d = construct_divergent(g);
  FlowConfig fc;
  fc.integrator.t_max = 50.0;
  const auto r = verify_theorem3(d, g, fc);
  EXPECT_TRUE(r.failed());
  bool noted = false;
  for (const auto& n : r.notes) noted = noted || n.find("ConditionViolated") != std::string::npos;
  EXPECT_TRUE(noted);
}

TEST(Divergence, SpiralChain) {
  const auto r = verify_divergence(spiral_chain());
  EXPECT_TRUE(r.passed()) << to_json(r).dump(2);
  EXPECT_GE(r.measured.at("norm_ratio"), 1e3);
}

TEST(Divergence, RandomChainWithExtension) {
  const auto r = verify_divergence(random_mrp(5, 0.9, 500));
  ASSERT_NE(r.outcome, Outcome::NotApplicable);
  EXPECT_TRUE(r.passed()) << to_json(r).dump(2);
}

TEST(Divergence, FiniteTimeBlowUpIsFollowed) {
  // Small imaginary part: theta_dot grows like |V|^2 and the orbit leaves every ball in finite time.
  const auto r = verify_divergence(random_mrp(3, 0.9, 7024));
  ASSERT_NE(r.outcome, Outcome::NotApplicable);
  EXPECT_TRUE(r.passed()) << to_json(r).dump(2);
  EXPECT_GT(r.measured.at("min_theta_dot"), 0.0);
}

TEST(Divergence, RealSpectrumNotApplicable) {
  const auto r = verify_divergence(spiral_chain(0.25));
  EXPECT_EQ(r.outcome, Outcome::NotApplicable);
}

TEST(KStep, SpiralChainHolds) {
  const auto r = verify_kstep_proposition(td_matrix(spiral_chain()), {1, 2, 3, 4, 5});
  EXPECT_TRUE(r.passed());
  EXPECT_TRUE(std::isinf(r.measured.at("sqrt_rho_k_3")));
}

TEST(KStep, CounterexampleFails) {
  const auto r = verify_kstep_proposition(td_matrix(random_mrp(4, 0.5, 72)), {3});
  EXPECT_TRUE(r.failed());
  EXPECT_LT(r.measured.at("sqrt_rho_k_3"), r.measured.at("lower_bound_k_3"));
  EXPECT_GE(r.measured.at("lambda_min_S_k_3"), r.measured.at("gershgorin_k_3"));
}

TEST(Lemma, AllDepthsBothActivations) {
  for (int depth = 1; depth <= 3; ++depth)
    for (auto act : {Activation::Relu, Activation::Square}) {
      const auto f = homogeneous_fixture(3, 40 + depth, act, depth);
      const auto r = verify_homogeneous_lemma(*f.net, depth);
      EXPECT_TRUE(r.passed()) << to_string(act) << " depth " << depth;
    }
}

TEST(LinearTd, ConvergesToFixedPoint) {
  const auto g = td_matrix(random_mrp(5, 0.9, 9));
  FlowConfig fc;
  fc.integrator.t_max = 1e4;
  EXPECT_TRUE(verify_linear_td(random_features(5, 2, 10), g, fc).passed());
}

TEST(Reports, JsonAndCsvShape) {
  VerificationReport r;
  r.claim_id = "T1";
  r.fixture = "x";
  r.outcome = Outcome::Passed;
  r.measured = {{"margin", 0.5}, {"rho", kInfinity}};
  const auto j = to_json(r);
  EXPECT_EQ(j["measured"]["rho"], "inf");
  EXPECT_EQ(j["outcome"], "passed");
  EXPECT_EQ(*r.margin(), 0.5);
  const std::string csv = summary_csv({r});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "claim_id,fixture,passed,outcome,margin");
}

TEST(Jacobian, FiniteDifferenceHelper) {
  const PerturbedTabular pt(0.3, unit_mixing_matrix(3, 1));
  const Vector th = Vector::LinSpaced(3, -1.0, 1.0);
  EXPECT_LT(matrix_relative_error(pt.jacobian(th), finite_difference_jacobian(pt, th)), 1e-8);
}

TEST(Suite, DeterministicAndPassing) {
  SuiteConfig cfg;
  cfg.claims = {"P2_kstep", "L_homogeneous", "B_linear", "P1_divergence"};
  const auto a = run_full_suite(cfg);
  const auto b = run_full_suite(cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(to_json(a[i]).dump(), to_json(b[i]).dump());
    EXPECT_TRUE(a[i].passed()) << a[i].claim_id << " " << a[i].fixture;
  }
}

TEST(Suite, NegatedDriveBreaksConvergenceClaims) {
  SuiteConfig cfg;
  cfg.claims = {"T3", "B_linear"};
  cfg.negate_drive = true;
  const auto reps = run_full_suite(cfg);
  ASSERT_FALSE(reps.empty());
  for (const auto& r : reps) EXPECT_TRUE(r.failed()) << r.claim_id << " " << r.fixture;
}
