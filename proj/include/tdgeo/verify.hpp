#pragma once

// Numerical checks of the convergence, divergence and conditioning results.
// Each check produces a VerificationReport that embeds enough configuration
// to re-run it.

#include "tdgeo/approximators.hpp"
#include "tdgeo/dynamics.hpp"
#include "tdgeo/mrp.hpp"
#include "tdgeo/mrp_io.hpp"
#include "tdgeo/spectral.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace tdgeo {

enum class Outcome { Passed, Failed, NotApplicable };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Passed: return "passed";
    case Outcome::Failed: return "failed";
    case Outcome::NotApplicable: return "not_applicable";
  }
  return "unknown";
}

struct VerificationReport {
  std::string claim_id;
  std::string fixture;
  Outcome outcome = Outcome::Failed;
  std::map<std::string, double> measured;
  nlohmann::json config = nlohmann::json::object();
  double tolerance = 0.0;
  std::vector<std::string> notes;

  bool passed() const { return outcome == Outcome::Passed; }
  bool failed() const { return outcome == Outcome::Failed; }
  /// Smallest recorded margin (bound minus measured), if any.
  std::optional<double> margin() const {
    const auto it = measured.find("margin");
    if (it == measured.end()) return std::nullopt;
    return it->second;
  }
};

inline nlohmann::json to_json(const VerificationReport& r) {
  nlohmann::json measured = nlohmann::json::object();
  for (const auto& [k, v] : r.measured) measured[k] = io::number_or_inf(v);
  return {{"claim_id", r.claim_id}, {"fixture", r.fixture},   {"outcome", to_string(r.outcome)},
          {"passed", r.passed()},   {"measured", measured},   {"config", r.config},
          {"tolerance", r.tolerance}, {"notes", r.notes}};
}

inline std::string summary_csv(const std::vector<VerificationReport>& reports) {
  std::string out = "claim_id,fixture,passed,outcome,margin\n";
  for (const auto& r : reports) {
    const auto m = r.margin();
    out += r.claim_id + "," + r.fixture + "," + (r.passed() ? "true" : "false") + "," +
           to_string(r.outcome) + "," + (m ? format_cell(*m) : std::string()) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared helpers

inline nlohmann::json geometry_config(const TDGeometry& g) {
  return {{"n", g.n},
          {"P", io::to_json(g.P)},
          {"reward", {{"vector", io::to_json(g.R)}}},
          {"gamma", g.gamma}};
}

inline nlohmann::json integrator_config(const IntegratorConfig& c) {
  return {{"method", c.method == Method::RK4 ? "rk4" : "rk45"},
          {"dt", c.dt},
          {"rtol", c.rtol},
          {"atol", c.atol},
          {"t_max", c.t_max},
          {"record_every", c.record_every},
          {"divergence_threshold", c.divergence_threshold},
          {"value_tolerance_fraction", c.value_tolerance_fraction}};
}

/// Geometry with A (and its parts) negated; the TD flow then runs backwards.
/// Only for exercising the harness on a broken environment.
inline TDGeometry negated_drive(TDGeometry g) {
  g.A = -g.A;
  g.S_A = -g.S_A;
  g.R_A = -g.R_A;
  g.lambda_min_S_A = -linalg::lambda_max_symmetric(-g.S_A);
  return g;
}

/// Central-difference Jacobian with step h.
inline Matrix finite_difference_jacobian(const Approximator& approx, const Vector& theta,
                                         double h = 1e-6) {
  Matrix j(approx.state_dim(), approx.param_dim());
  for (Index k = 0; k < theta.size(); ++k) {
    Vector plus = theta, minus = theta;
    plus(k) += h;
    minus(k) -= h;
    j.col(k) = (approx.value(plus) - approx.value(minus)) / (2.0 * h);
  }
  return j;
}

inline double matrix_relative_error(const Matrix& got, const Matrix& want) {
  const double scale = std::max(want.cwiseAbs().maxCoeff(), 1e-300);
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

struct FlowConfig {
  IntegratorConfig integrator;
  double tolerance = 1e-3;  // multiplicative slack on every bound
  double abs_tolerance = 0.0;
  double tail_fraction = 0.5;
  std::optional<Vector> theta0;
};

inline nlohmann::json flow_config_json(const FlowConfig& c, const Vector& theta0) {
  return {{"integrator", integrator_config(c.integrator)},
          {"tolerance", c.tolerance},
          {"abs_tolerance", c.abs_tolerance},
          {"tail_fraction", c.tail_fraction},
          {"theta0", io::to_json(theta0)}};
}

inline void require_homogeneous(const Approximator& approx) {
  const auto d = approx.degree();
  if (!d) throw Error(ErrorCode::NotHomogeneous, approx.kind() + " has no homogeneity degree");
  const auto samples = kink_free_samples(approx, 5, 97);
  const auto rep = check_homogeneity(approx, *d, samples, {0.5, 2.0}, 1e-8);
  if (!rep.passed)
    throw Error(ErrorCode::NotHomogeneous,
                "homogeneity check failed: scaling error " + std::to_string(rep.max_scaling_error) +
                    ", Euler error " + std::to_string(rep.max_euler_error));
}

namespace detail {

inline std::vector<double> norm_mu_series(const Trajectory& t) {
  return t.series([](const Diagnostics& d) { return d.norm_mu; });
}

/// Tail minimum and maximum. A run that converged before filling the tail
/// window sits at a stationary point, so its last samples stand in.
inline std::pair<double, double> tail_range(const Trajectory& t, const std::vector<double>& v,
                                            double tail_fraction) {
  try {
    return {liminf_estimate(t.times, v, tail_fraction), limsup_estimate(t.times, v, tail_fraction)};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TooFewSamples || t.status != TerminalStatus::Converged) throw;
    const auto first = v.end() - static_cast<std::ptrdiff_t>(std::min<std::size_t>(v.size(), 3));
    return {*std::min_element(first, v.end()), *std::max_element(first, v.end())};
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Homogeneous approximators: liminf ||V||_mu <= B

inline VerificationReport verify_theorem1(const ApproximatorPtr& net, const TDGeometry& g,
                                          const FlowConfig& cfg = {}) {
  require_homogeneous(*net);
  const double degree = *net->degree();
  const Vector theta0 = cfg.theta0.value_or(net->initial_theta());
  const auto sys = td_vector_field(net, g);
  const auto traj = integrate(sys, theta0, cfg.integrator);

  VerificationReport r;
  r.claim_id = "T1";
  r.tolerance = cfg.tolerance;
  r.config = {{"mrp", geometry_config(g)},
              {"approximator", net->to_json()},
              {"flow", flow_config_json(cfg, theta0)}};
  const auto norms = detail::norm_mu_series(traj);
  const auto [liminf, limsup] = detail::tail_range(traj, norms, cfg.tail_fraction);
  const double bound = g.B * (1.0 + cfg.tolerance) + cfg.abs_tolerance;

  // Outside the ball of radius B the parameter norm must shrink.
  std::size_t in_region = 0, violations = 0;
  double worst_rate = -kInfinity;
  for (const auto& d : traj.diagnostics) {
    if (d.norm_mu > 1.01 * g.B && d.norm_mu > cfg.abs_tolerance) {
      ++in_region;
      worst_rate = std::max(worst_rate, d.theta_norm_sq_rate);
      if (!(d.theta_norm_sq_rate < 0.0)) ++violations;
    }
  }
  r.measured = {{"B", g.B},
                {"degree", degree},
                {"liminf_norm_mu", liminf},
                {"limsup_norm_mu", limsup},
                {"bound", bound},
                {"margin", bound - liminf},
                {"samples", static_cast<double>(traj.size())},
                {"samples_outside_B", static_cast<double>(in_region)},
                {"mechanism_violations", static_cast<double>(violations)},
                {"max_rate_outside_B", in_region ? worst_rate : 0.0},
                {"t_end", traj.times.back()}};
  r.notes.push_back("terminal status " + to_string(traj.status));
  if (limsup > bound) r.notes.push_back("limsup exceeds the liminf bound (recorded only)");
  const bool ok = traj.status != TerminalStatus::Diverged && liminf <= bound && violations == 0;
  r.outcome = ok ? Outcome::Passed : Outcome::Failed;
  return r;
}

/// Shell estimate of c, C in c ||th||^D <= ||V(th)||_mu <= C ||th||^D.
struct BiHoelderConstants {
  double c = 0.0;
  double C = 0.0;
  double s = 0.0;
  double r = 0.0;
};

inline BiHoelderConstants estimate_bihoelder(const Approximator& approx, const TDGeometry& g,
                                             std::uint64_t seed, int samples = 10000,
                                             double inner = 0.1, double outer = 10.0) {
  require_homogeneous(approx);
  const double degree = *approx.degree();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> radius(inner, outer);
  double lo = kInfinity, hi = 0.0;
  for (int i = 0; i < samples; ++i) {
    Vector th(approx.param_dim());
    for (Index k = 0; k < th.size(); ++k) th(k) = normal(rng);
    const double rad = radius(rng);
    th *= rad / th.norm();
    const double q = mu_norm(g.mu, approx.value(th)) / std::pow(rad, degree);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  BiHoelderConstants k{0.9 * lo, 1.1 * hi, degree, degree};
  if (!(k.c > 1e-12 * k.C))
    throw Error(ErrorCode::ConstantEstimationFailed,
                "shell sampling found ||V(th)|| / ||th||^D arbitrarily close to zero");
  return k;
}

/// limsup ||V||_mu <= C (B / c)^{r/s}.
inline VerificationReport verify_bihoelder(const ApproximatorPtr& net, const TDGeometry& g,
                                           const FlowConfig& cfg = {}, std::uint64_t seed = 0) {
  const auto k = estimate_bihoelder(*net, g, seed);
  const Vector theta0 = cfg.theta0.value_or(net->initial_theta());
  const auto traj = integrate(td_vector_field(net, g), theta0, cfg.integrator);
  const auto norms = detail::norm_mu_series(traj);
  const double tail_max = detail::tail_range(traj, norms, cfg.tail_fraction).second;
  const double bound = k.C * std::pow(g.B / k.c, k.r / k.s) * (1.0 + cfg.tolerance) +
                       cfg.abs_tolerance;
  VerificationReport r;
  r.claim_id = "P_bihoelder";
  r.tolerance = cfg.tolerance;
  r.config = {{"mrp", geometry_config(g)},
              {"approximator", net->to_json()},
              {"flow", flow_config_json(cfg, theta0)},
              {"shell", {{"seed", seed}, {"samples", 10000}, {"radius", {0.1, 10.0}}}}};
  r.measured = {{"c", k.c},           {"C", k.C},         {"s", k.s},
                {"r", k.r},           {"B", g.B},         {"tail_max_norm_mu", tail_max},
                {"bound", bound},     {"margin", bound - tail_max}};
  r.notes.push_back("terminal status " + to_string(traj.status));
  r.outcome = (traj.status != TerminalStatus::Diverged && tail_max <= bound) ? Outcome::Passed
                                                                              : Outcome::Failed;
  return r;
}

// ---------------------------------------------------------------------------
// Residual-homogeneous approximators

/// Emits two reports: T2 (liminf ||V - Pi V*|| <= B_Phi) and C1
/// (liminf ||V - V*|| <= (1 + (1+gamma)/(1-gamma)) ||V* - Pi V*||).
inline std::vector<VerificationReport> verify_theorem2_and_corollary(
    const std::shared_ptr<const ResidualNetwork>& net, const TDGeometry& g,
    const FlowConfig& cfg = {}) {
  require(net != nullptr, ErrorCode::InvalidArgument, "missing residual network");
  const Matrix& phi = net->features();
  require(linalg::numerical_rank(phi) == phi.cols(), ErrorCode::RankDeficient,
          "residual features must have full column rank");
  require_homogeneous(net->inner());
  const double degree = *net->inner().degree();

  const Matrix proj = mu_projection(phi, g.mu);
  const Vector pv = proj * g.V_star;
  const Vector resid = g.V_star - pv;
  const Matrix i_minus = Matrix::Identity(g.n, g.n) - g.gamma * g.P;
  const double b_phi = mu_norm(g.mu, i_minus * resid) / (1.0 - g.gamma);
  const double best = mu_norm(g.mu, resid);
  const double c1_factor = 1.0 + (1.0 + g.gamma) / (1.0 - g.gamma);
  // Weighted energy ||th_1 - th_1*||^2 + ||th_2||^2 / D with Phi th_1* = Pi V*.
  const Vector theta1_star =
      (phi.transpose() * g.D_mu * phi).ldlt().solve(phi.transpose() * g.D_mu * g.V_star);

  const Vector theta0 = cfg.theta0.value_or(net->initial_theta());
  const auto sys = td_vector_field(net, g);
  const auto traj = integrate(sys, theta0, cfg.integrator);

  std::vector<double> to_proj, to_star;
  std::size_t in_region = 0, violations = 0;
  const Index p = net->linear_dim();
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Vector& v = traj.values[i];
    const double e = mu_norm(g.mu, v - pv);
    to_proj.push_back(e);
    to_star.push_back(mu_norm(g.mu, v - g.V_star));
    if (e > 1.01 * b_phi && e > cfg.abs_tolerance) {
      ++in_region;
      const Vector& th = traj.thetas[i];
      const Vector field = sys(th);
      const double rate = 2.0 * ((th.head(p) - theta1_star).dot(field.head(p)) +
                                 th.tail(th.size() - p).dot(field.tail(th.size() - p)) / degree);
      if (!(rate < 0.0)) ++violations;
    }
  }
  const auto [liminf_proj, limsup_proj] = detail::tail_range(traj, to_proj, cfg.tail_fraction);
  const double liminf_star = detail::tail_range(traj, to_star, cfg.tail_fraction).first;
  const double bound_t2 = b_phi * (1.0 + cfg.tolerance) + cfg.abs_tolerance;
  const double bound_c1 = c1_factor * best * (1.0 + cfg.tolerance) + cfg.abs_tolerance;

  nlohmann::json config = {{"mrp", geometry_config(g)},
                           {"approximator", net->to_json()},
                           {"flow", flow_config_json(cfg, theta0)},
                           {"projection", "mu-weighted"}};
  const bool finite_run = traj.status != TerminalStatus::Diverged;

  VerificationReport t2;
  t2.claim_id = "T2";
  t2.tolerance = cfg.tolerance;
  t2.config = config;
  t2.measured = {{"B_Phi", b_phi},
                 {"liminf_err_proj", liminf_proj},
                 {"limsup_err_proj", limsup_proj},
                 {"bound", bound_t2},
                 {"margin", bound_t2 - liminf_proj},
                 {"samples_outside_B_Phi", static_cast<double>(in_region)},
                 {"mechanism_violations", static_cast<double>(violations)}};
  t2.notes.push_back("projection onto span(Phi) is mu-weighted");
  t2.notes.push_back("terminal status " + to_string(traj.status));
  t2.outcome = (finite_run && liminf_proj <= bound_t2 && violations == 0) ? Outcome::Passed
                                                                          : Outcome::Failed;

  VerificationReport c1;
  c1.claim_id = "C1";
  c1.tolerance = cfg.tolerance;
  c1.config = config;
  c1.measured = {{"best_linear_error", best},
                 {"factor", c1_factor},
                 {"liminf_err_star", liminf_star},
                 {"bound", bound_c1},
                 {"margin", bound_c1 - liminf_star}};
  c1.notes.push_back("terminal status " + to_string(traj.status));
  c1.outcome = (finite_run && liminf_star <= bound_c1) ? Outcome::Passed : Outcome::Failed;
  return {t2, c1};
}

// ---------------------------------------------------------------------------
// Well-conditioned approximators: kappa < rho implies convergence

struct CalibratedPerturbation {
  std::shared_ptr<PerturbedTabular> approx;
  double beta = 0.0;
  double max_sampled_kappa = 0.0;
  double rho = 0.0;
};

/// Largest beta (by bisection) for which th + beta tanh(W th) keeps the
/// sampled kappa(J J^T) below rho / margin. Samples cover the segment from
/// `theta0` to V*, Gaussian clouds of scale `scale` around both ends, and
/// small |th|, where tanh' is largest.
inline CalibratedPerturbation calibrate_perturbed_tabular(const TDGeometry& g, std::uint64_t seed,
                                                          const Vector& theta0, int samples = 100,
                                                          double margin = 1.1, double scale = 1.0) {
  require(theta0.size() == g.n && samples >= 4, ErrorCode::InvalidArgument,
          "calibration needs theta0 of length n and at least 4 samples");
  const double rho = reversibility_coefficient(g);
  const Matrix w = unit_mixing_matrix(g.n, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> thetas{Vector::Zero(g.n)};
  const auto noise = [&](double s) {
    Vector z(g.n);
    for (Index k = 0; k < g.n; ++k) z(k) = s * normal(rng);
    return z;
  };
  const int quarter = samples / 4;
  for (int i = 0; i < quarter; ++i) {
    const double t = quarter > 1 ? static_cast<double>(i) / (quarter - 1) : 0.0;
    thetas.push_back((1.0 - t) * theta0 + t * g.V_star);
  }
  for (int i = 0; i < quarter; ++i) thetas.push_back(g.V_star + noise(scale));
  for (int i = 0; i < quarter; ++i) thetas.push_back(theta0 + noise(scale));
  while (static_cast<int>(thetas.size()) < samples) thetas.push_back(noise(0.1 * scale));
  const auto max_kappa = [&](double beta) {
    const PerturbedTabular approx(beta, w);
    return theorem3_condition(approx, g, thetas).max_kappa;
  };
  const double target = rho / margin;
  double lo = 0.0, hi = 0.99;
  if (max_kappa(hi) <= target) {
    lo = hi;
  } else {
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (max_kappa(mid) <= target ? lo : hi) = mid;
    }
  }
  CalibratedPerturbation out;
  out.beta = lo;
  out.approx = std::make_shared<PerturbedTabular>(lo, w);
  out.max_sampled_kappa = max_kappa(lo);
  out.rho = rho;
  return out;
}

/// Lyapunov slack: increases below `lyapunov_atol` between records are tolerated.
inline VerificationReport verify_theorem3(const ApproximatorPtr& approx, const TDGeometry& g,
                                          const FlowConfig& cfg = {},
                                          double lyapunov_atol = 1e-10,
                                          double terminal_tolerance = 1e-6) {
  VerificationReport r;
  r.claim_id = "T3";
  r.tolerance = lyapunov_atol;
  const double rho = reversibility_coefficient(g);
  const Vector theta0 = cfg.theta0.value_or(approx->initial_theta());
  r.config = {{"mrp", geometry_config(g)},
              {"approximator", approx->to_json()},
              {"flow", flow_config_json(cfg, theta0)},
              {"lyapunov_atol", lyapunov_atol},
              {"terminal_tolerance", terminal_tolerance}};

  const double kappa0 = tangent_kernel_condition(approx->jacobian(theta0));
  if (!(kappa0 < rho)) {
    r.outcome = Outcome::Failed;
    r.measured = {{"rho", rho}, {"kappa_at_theta0", kappa0}, {"condition_violated", 1.0},
                  {"first_violation_index", 0.0}, {"margin", rho - kappa0}};
    r.notes.push_back("ConditionViolated at theta0: kappa >= rho");
    return r;
  }

  const auto traj = integrate(td_vector_field(approx, g), theta0, cfg.integrator);
  double max_kappa = 0.0, max_increase = -kInfinity;
  long first_violation = -1, first_increase = -1;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& d = traj.diagnostics[i];
    max_kappa = std::max(max_kappa, d.kappa);
    if (!(d.kappa < rho) && first_violation < 0) first_violation = static_cast<long>(i);
    if (i > 0) {
      const double inc = d.lyapunov - traj.diagnostics[i - 1].lyapunov;
      max_increase = std::max(max_increase, inc);
      if (!(inc < lyapunov_atol) && first_increase < 0) first_increase = static_cast<long>(i);
    }
  }
  const double terminal = traj.diagnostics.back().norm_mu_err;
  r.measured = {{"rho", rho},
                {"max_kappa", max_kappa},
                {"margin", rho - max_kappa},
                {"max_lyapunov_increase", max_increase},
                {"terminal_mu_error", terminal},
                {"condition_violated", first_violation >= 0 ? 1.0 : 0.0},
                {"first_violation_index", static_cast<double>(first_violation)},
                {"first_lyapunov_increase_index", static_cast<double>(first_increase)},
                {"samples", static_cast<double>(traj.size())},
                {"t_end", traj.times.back()}};
  r.notes.push_back("terminal status " + to_string(traj.status));
  if (first_violation >= 0) r.notes.push_back("ConditionViolated along the trajectory");
  const bool ok = first_violation < 0 && first_increase < 0 && terminal < terminal_tolerance &&
                  traj.status != TerminalStatus::Diverged;
  r.outcome = ok ? Outcome::Passed : Outcome::Failed;
  return r;
}

// ---------------------------------------------------------------------------
// Divergence of TD with the spiral approximator

struct DivergenceConfig {
  double epsilon_fraction = 0.5;
  V0Mode v0_mode = V0Mode::U1;
  double ratio_threshold = 1e3;
  int premise_samples = 1000;
  std::uint64_t seed = 0;
  IntegratorConfig integrator = [] {
    IntegratorConfig c;
    c.t_max = 1e6;
    return c;
  }();
};

/// Runs with the reward set to zero (V* = 0), which the construction assumes.
inline VerificationReport verify_divergence(const MarkovRewardProcess& mrp,
                                            const DivergenceConfig& cfg = {}) {
  VerificationReport r;
  r.claim_id = "P1_divergence";
  r.tolerance = cfg.ratio_threshold;
  const auto g = td_matrix(mrp.with_reward(Vector(Vector::Zero(mrp.n()))));
  r.config = {{"mrp", geometry_config(g)},
              {"epsilon_fraction", cfg.epsilon_fraction},
              {"extension_rank", g.n - 2},
              {"integrator", integrator_config(cfg.integrator)},
              {"seed", cfg.seed},
              {"reward", "zeroed"}};
  std::shared_ptr<DivergentApproximator> approx;
  try {
    approx = construct_divergent(g, cfg.epsilon_fraction, cfg.v0_mode, g.n - 2);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoComplexEigenvalue) throw;
    r.outcome = Outcome::NotApplicable;
    r.notes.push_back(std::string("NotApplicable: ") + e.what());
    return r;
  }
  const auto& parts = approx->parts();
  r.config["approximator"] = approx->to_json();

  // Construction-time gate: V^T Q^T A V <= -(a^2 + b^2) ||V||^2 / C on E.
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double r2 = parts.a * parts.a + parts.b * parts.b;
  double worst_premise = -kInfinity;
  for (int i = 0; i < cfg.premise_samples; ++i) {
    const Vector v = parts.U * Eigen::Vector2d(normal(rng), normal(rng));
    const double lhs = v.dot(parts.Q.transpose() * (g.A * v));
    const double rhs = -r2 * v.squaredNorm() / parts.C;
    worst_premise = std::max(worst_premise, (lhs - rhs) / std::max(std::abs(rhs), 1e-300));
  }
  const bool premise = worst_premise <= 1e-9;

  const auto sys = td_vector_field(approx, g);
  const Vector theta0 = approx->initial_theta();
  // The orbit blows up in finite time once |V| grows, so follow it in the
  // rescaled time ds = (1 + |theta_dot|) dt, which has the same orbit.
  const auto traj = integrate(sys, theta0, cfg.integrator, [&sys](const Vector& th) {
    const Vector f = sys(th);
    return Vector(f / (1.0 + f.norm()));
  });

  double min_rate = kInfinity;
  Index min_rank = g.n, max_rank = 0;
  for (const auto& th : traj.thetas) {
    min_rate = std::min(min_rate, sys(th)(0));
    const Index rank = linalg::numerical_rank(approx->jacobian(th));
    min_rank = std::min(min_rank, rank);
    max_rank = std::max(max_rank, rank);
  }
  const double v_initial = traj.values.front().norm();
  const double v_final = traj.values.back().norm();
  const double ratio = v_final / v_initial;
  r.measured = {{"a", parts.a},
                {"b", parts.b},
                {"C", parts.C},
                {"epsilon", parts.epsilon},
                {"premise_worst_relative", worst_premise},
                {"min_theta_dot", min_rate},
                {"norm_ratio", ratio},
                {"min_jacobian_rank", static_cast<double>(min_rank)},
                {"max_jacobian_rank", static_cast<double>(max_rank)},
                {"margin", std::min(min_rate, ratio - cfg.ratio_threshold)},
                {"samples", static_cast<double>(traj.size())},
                {"t_end", traj.times.back()}};
  r.notes.push_back("terminal status " + to_string(traj.status));
  r.notes.push_back("time rescaled by 1 + |theta_dot|; t_end is rescaled time");
  if (!premise) r.notes.push_back("quadratic-form premise failed on E");
  const bool ok = premise && min_rate > 0.0 && traj.status == TerminalStatus::Diverged &&
                  ratio > cfg.ratio_threshold && min_rank == g.n - 1 && max_rank == g.n - 1;
  r.outcome = ok ? Outcome::Passed : Outcome::Failed;
  return r;
}

// ---------------------------------------------------------------------------
// k-step returns

inline VerificationReport verify_kstep_proposition(const TDGeometry& g,
                                                   const std::vector<int>& k_range,
                                                   double tolerance = 1e-9) {
  require(!k_range.empty(), ErrorCode::InvalidArgument, "k_range must be nonempty");
  VerificationReport r;
  r.claim_id = "P2_kstep";
  r.tolerance = tolerance;
  r.config = {{"mrp", geometry_config(g)}, {"k_range", k_range}};
  const double l2 = lambda2(g.P);
  double worst_bound_margin = kInfinity, worst_gersh_margin = kInfinity;
  bool ok = true;
  for (int k : k_range) {
    const auto km = k_step_matrix(g, k);
    const double sqrt_rho = std::sqrt(effective_reversibility(km));
    const double lower = k_step_lower_bound(g.mu, g.gamma, k, l2);
    const double smin = linalg::lambda_min_symmetric(km.S);
    const double gersh = gershgorin_smin_bound(g.mu, g.gamma, k);
    const std::string ks = std::to_string(k);
    r.measured["sqrt_rho_k_" + ks] = sqrt_rho;
    r.measured["lower_bound_k_" + ks] = lower;
    r.measured["lambda_min_S_k_" + ks] = smin;
    r.measured["gershgorin_k_" + ks] = gersh;
    const bool bound_ok = std::isinf(sqrt_rho) || sqrt_rho >= lower - tolerance;
    const bool gersh_ok = smin >= gersh - tolerance;
    if (!bound_ok) r.notes.push_back("k = " + ks + ": sqrt(rho_k) below the lower bound");
    if (!gersh_ok) r.notes.push_back("k = " + ks + ": lambda_min(S_k) below mu_min (1 - gamma^k)");
    ok = ok && bound_ok && gersh_ok;
    if (!std::isinf(sqrt_rho) && !std::isinf(lower))
      worst_bound_margin = std::min(worst_bound_margin, (sqrt_rho - lower) / lower);
    worst_gersh_margin = std::min(worst_gersh_margin, smin - gersh);
  }
  r.measured["lambda2"] = l2;
  r.measured["worst_relative_bound_margin"] = worst_bound_margin;
  r.measured["worst_gershgorin_margin"] = worst_gersh_margin;
  r.measured["margin"] = std::min(worst_bound_margin, worst_gersh_margin);
  r.outcome = ok ? Outcome::Passed : Outcome::Failed;
  return r;
}

// ---------------------------------------------------------------------------
// Per-layer homogeneity of networks

inline VerificationReport verify_homogeneous_lemma(const HomogeneousNetwork& net,
                                                   std::uint64_t seed = 0, int samples = 20,
                                                   double identity_tol = 1e-8,
                                                   double fd_tol = 1e-5) {
  VerificationReport r;
  r.claim_id = "L_homogeneous";
  r.tolerance = identity_tol;
  r.config = {{"approximator", net.to_json()}, {"seed", seed}, {"samples", samples}};
  const auto thetas = kink_free_samples(net, static_cast<std::size_t>(samples), seed);
  double worst_identity = 0.0, worst_fd = 0.0;
  for (const auto& th : thetas) {
    worst_identity = std::max(worst_identity, per_layer_identity_error(net, th));
    worst_fd = std::max(worst_fd, matrix_relative_error(net.jacobian(th),
                                                        finite_difference_jacobian(net, th)));
  }
  for (int i = 1; i <= net.depth(); ++i)
    r.measured["layer_factor_" + std::to_string(i)] = net.layer_factor(i);
  r.measured["max_identity_error"] = worst_identity;
  r.measured["max_fd_jacobian_error"] = worst_fd;
  r.measured["margin"] = identity_tol - worst_identity;
  r.outcome = (worst_identity < identity_tol && worst_fd < fd_tol) ? Outcome::Passed
                                                                   : Outcome::Failed;
  return r;
}

// ---------------------------------------------------------------------------
// Linear TD fixed point

inline VerificationReport verify_linear_td(const Matrix& phi, const TDGeometry& g,
                                           const FlowConfig& cfg = {},
                                           double theta_tolerance = 1e-6) {
  VerificationReport r;
  r.claim_id = "B_linear";
  r.tolerance = theta_tolerance;
  const auto fp = linear_fixed_point(phi, g);
  const auto approx = std::make_shared<LinearApproximator>(phi);
  const Vector theta0 = cfg.theta0.value_or(approx->initial_theta());
  const auto traj = integrate(td_vector_field(approx, g), theta0, cfg.integrator);
  const double dist = (traj.thetas.back() - fp.theta_star).norm();
  r.config = {{"mrp", geometry_config(g)},
              {"approximator", approx->to_json()},
              {"flow", flow_config_json(cfg, theta0)}};
  r.measured = {{"theta_distance", dist},
                {"fixed_point_error", fp.error},
                {"error_bound", fp.bound},
                {"margin", std::min(theta_tolerance - dist, fp.bound + 1e-9 - fp.error)},
                {"t_end", traj.times.back()}};
  r.notes.push_back("terminal status " + to_string(traj.status));
  r.outcome = (dist < theta_tolerance && fp.error <= fp.bound + 1e-9) ? Outcome::Passed
                                                                     : Outcome::Failed;
  return r;
}

// ---------------------------------------------------------------------------
// Canonical fixtures

/// Three-state backward cycle with half self-loops; zero reward.
inline MarkovRewardProcess spiral_chain(double delta = 0.0, double gamma = 0.9) {
  return cycle_mrp(3, delta, 0.5, gamma);
}

/// The spiral chain with a nonzero reward, so V* != 0.
inline MarkovRewardProcess rewarded_spiral_chain(double gamma = 0.9) {
  return spiral_chain(0.0, gamma).with_reward(Vector(Eigen::Vector3d(1.0, 0.0, -1.0)));
}

struct NetworkFixture {
  TDGeometry geometry;
  std::shared_ptr<HomogeneousNetwork> net;
  /// Initial weights rescaled (by homogeneity) so that ||V(theta0)||_mu = 3B,
  /// which starts the flow inside the contraction region.
  Vector theta0;
};

/// Random rewarded chain (3..6 states, gamma 0.9) with a depth-`depth`
/// network on 3 Gaussian features, hidden width 4. theta0 is scaled so that
/// ||V(theta0)||_mu = 3B; weights giving V = 0 (dead ReLU units) are redrawn.
inline NetworkFixture homogeneous_fixture(std::uint64_t mrp_seed, std::uint64_t net_seed,
                                          Activation act, int depth = 2) {
  const Index n = 3 + static_cast<Index>(mrp_seed % 4);
  NetworkFixture f{td_matrix(random_mrp(n, 0.9, mrp_seed)), nullptr, Vector()};
  std::vector<Index> dims{3};
  for (int i = 1; i < depth; ++i) dims.push_back(4);
  dims.push_back(1);
  const Matrix phi = random_features(n, 3, 1000 + mrp_seed);
  double v0 = 0.0;
  for (std::uint64_t attempt = 0; v0 <= 1e-12 * f.geometry.B; ++attempt) {
    require(attempt < 1000, ErrorCode::InvalidArgument, "no network with nonzero output found");
    f.net = homogeneous_network(dims, phi, act, net_seed + attempt * 7919);
    f.theta0 = f.net->initial_theta();
    v0 = mu_norm(f.geometry.mu, f.net->value(f.theta0));
  }
  f.theta0 *= std::pow(3.0 * f.geometry.B / v0, 1.0 / *f.net->degree());
  return f;
}

struct ResidualFixture {
  TDGeometry geometry;
  std::shared_ptr<ResidualNetwork> net;
};

/// Rank-`rank` Gaussian baseline features plus a depth-2 network on tabular
/// features, on a random rewarded chain with n states.
inline ResidualFixture residual_fixture(Index n, Index rank, std::uint64_t seed,
                                        Activation act = Activation::Square) {
  ResidualFixture f{td_matrix(random_mrp(n, 0.9, seed)), nullptr};
  auto inner = homogeneous_network({n, 3, 1}, Matrix::Identity(n, n), act, seed + 7);
  f.net = std::make_shared<ResidualNetwork>(random_features(n, rank, seed + 13), inner);
  return f;
}

/// ReLU fields jump across kinks, where adaptive control stalls; those runs
/// use fixed-step RK4.
inline FlowConfig network_flow(Activation act, double t_max = 200.0) {
  FlowConfig c;
  c.integrator.t_max = t_max;
  if (act == Activation::Relu) {
    c.integrator.method = Method::RK4;
    c.integrator.dt = 1e-2;
    c.integrator.record_every = 10;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Full suite

struct SuiteConfig {
  std::uint64_t seed = 0;
  std::set<std::string> claims;  // empty: every claim
  bool negate_drive = false;

  bool wants(const std::string& id) const { return claims.empty() || claims.count(id) > 0; }
};

inline const std::vector<std::string>& claim_ids() {
  static const std::vector<std::string> ids{"T1", "P_bihoelder", "T2",  "C1",       "T3",
                                            "P1_divergence", "P2_kstep", "L_homogeneous",
                                            "B_linear"};
  return ids;
}

/// Every claim on its canonical fixtures. Errors inside a check become
/// failed reports instead of aborting the suite.
inline std::vector<VerificationReport> run_full_suite(const SuiteConfig& cfg = {}) {
  std::vector<VerificationReport> out;
  const auto geom = [&](const TDGeometry& g) { return cfg.negate_drive ? negated_drive(g) : g; };
  const auto guarded = [&](const std::string& id, const std::string& fixture, auto&& fn) {
    try {
      auto reports = fn();
      for (auto& r : reports) {
        r.fixture = fixture;
        r.config["suite_seed"] = cfg.seed;
        if (cfg.negate_drive) r.config["negated_A"] = true;
        if (cfg.wants(r.claim_id)) out.push_back(std::move(r));
      }
    } catch (const Error& e) {
      VerificationReport r;
      r.claim_id = id;
      r.fixture = fixture;
      r.outcome = Outcome::Failed;
      r.notes.push_back(std::string(e.what()));
      if (cfg.wants(id)) out.push_back(std::move(r));
    }
  };
  const std::uint64_t s = cfg.seed;

  if (cfg.wants("T1"))
    for (auto act : {Activation::Square, Activation::Relu})
      for (std::uint64_t i = 0; i < 3; ++i)
        guarded("T1", to_string(act) + "_mrp" + std::to_string(s + i), [&] {
          const auto f = homogeneous_fixture(s + i, s + 100 + i, act);
          auto flow = network_flow(act);
          flow.theta0 = f.theta0;
          return std::vector{verify_theorem1(f.net, geom(f.geometry), flow)};
        });

  if (cfg.wants("P_bihoelder")) {
    for (std::uint64_t i = 0; i < 2; ++i)
      guarded("P_bihoelder", "square_depth1_mrp" + std::to_string(s + i), [&] {
        const auto f = homogeneous_fixture(s + i, s + 200 + i, Activation::Square, 1);
        return std::vector{verify_bihoelder(f.net, geom(f.geometry), network_flow(Activation::Square), s + i)};
      });
    guarded("P_bihoelder", "linear", [&] {
      const auto g = geom(td_matrix(random_mrp(4, 0.9, s + 300)));
      const auto lin = std::make_shared<LinearApproximator>(random_features(4, 2, s + 301));
      return std::vector{verify_bihoelder(lin, g, network_flow(Activation::Square), s)};
    });
  }

  if (cfg.wants("T2") || cfg.wants("C1"))
    for (Index rank : {1, 2})
      for (std::uint64_t i = 0; i < 2; ++i) {
        const Index n = 3 + static_cast<Index>((s + i) % 3);
        guarded("T2", "rank" + std::to_string(rank) + "_n" + std::to_string(n) + "_seed" +
                          std::to_string(s + i),
                [&] {
                  const auto f = residual_fixture(n, rank, s + 400 + i);
                  return verify_theorem2_and_corollary(f.net, geom(f.geometry), network_flow(Activation::Square));
                });
      }

  if (cfg.wants("T3"))
    guarded("T3", "spiral_chain_perturbed_tabular", [&] {
      const auto g = td_matrix(rewarded_spiral_chain());
      FlowConfig fc;
      fc.integrator.t_max = 5000.0;
      fc.theta0 = Vector::Zero(g.n);
      const auto cal = calibrate_perturbed_tabular(g, s, *fc.theta0);
      auto r = verify_theorem3(cal.approx, geom(g), fc);
      r.measured["beta"] = cal.beta;
      r.measured["calibration_max_kappa"] = cal.max_sampled_kappa;
      return std::vector{r};
    });

  if (cfg.wants("P1_divergence")) {
    guarded("P1_divergence", "spiral_chain",
            [&] { return std::vector{verify_divergence(spiral_chain())}; });
    for (std::uint64_t i = 0; i < 3; ++i)
      guarded("P1_divergence", "random_n5_seed" + std::to_string(s + 500 + i), [&] {
        DivergenceConfig dc;
        dc.seed = s + i;
        return std::vector{verify_divergence(random_mrp(5, 0.9, s + 500 + i), dc)};
      });
  }

  if (cfg.wants("P2_kstep")) {
    std::vector<int> ks{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    guarded("P2_kstep", "spiral_chain",
            [&] { return std::vector{verify_kstep_proposition(td_matrix(spiral_chain()), ks)}; });
    for (std::uint64_t i = 0; i < 5; ++i)
      guarded("P2_kstep", "random_seed" + std::to_string(s + 600 + i), [&] {
        const Index n = 2 + static_cast<Index>(i % 5);
        return std::vector{verify_kstep_proposition(td_matrix(random_mrp(n, 0.9, s + 600 + i)), ks)};
      });
  }

  if (cfg.wants("L_homogeneous"))
    for (int depth = 1; depth <= 3; ++depth)
      for (auto act : {Activation::Relu, Activation::Square})
        guarded("L_homogeneous", to_string(act) + "_depth" + std::to_string(depth), [&] {
          const auto f = homogeneous_fixture(s + 700, s + 700 + depth, act, depth);
          return std::vector{verify_homogeneous_lemma(*f.net, s + depth)};
        });

  if (cfg.wants("B_linear"))
    for (std::uint64_t i = 0; i < 2; ++i)
      guarded("B_linear", "random_seed" + std::to_string(s + 800 + i), [&] {
        const auto g = geom(td_matrix(random_mrp(5, 0.9, s + 800 + i)));
        FlowConfig fc;
        fc.integrator.t_max = 1e4;
        return std::vector{verify_linear_td(random_features(5, 2, s + 801 + i), g, fc)};
      });

  return out;
}

}  // namespace tdgeo
