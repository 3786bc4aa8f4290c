#pragma once

// Reversibility coefficients, tangent-kernel conditioning and the k-step bounds.

#include "tdgeo/approximator.hpp"
#include "tdgeo/linalg.hpp"
#include "tdgeo/mrp.hpp"
#include "tdgeo/mrp_io.hpp"

#include <algorithm>
#include <vector>

namespace tdgeo {

inline constexpr double kReversibleThreshold = 1e-12;
inline constexpr double kRankCutoff = 1e-12;

/// rho = 1 / lambda_max((S^T S + A^T A)^{-1} R^T R): the minimum over V != 0 of
/// (||S V||^2 + ||A V||^2) / ||R V||^2. The generalized problem is reduced
/// through the Cholesky factor of S^T S + A^T A. Returns +inf when
/// ||R||_F < 1e-12.
inline double reversibility_coefficient(const Matrix& s, const Matrix& r, const Matrix& a) {
  require(s.rows() == a.rows() && r.rows() == a.rows() && s.cols() == a.cols() &&
              r.cols() == a.cols(),
          ErrorCode::ShapeMismatch, "reversibility: matrix shapes differ");
  if (r.norm() < kReversibleThreshold) return kInfinity;
  const Matrix m = s.transpose() * s + a.transpose() * a;
  Eigen::LLT<Matrix> llt(m);
  require(llt.info() == Eigen::Success, ErrorCode::SolveFailure,
          "S^T S + A^T A is not positive definite");
  const Matrix l_inv_rt = llt.matrixL().solve(r.transpose());  // L^{-1} R^T
  const Matrix reduced = l_inv_rt * l_inv_rt.transpose();       // L^{-1} R^T R L^{-T}
  const double top = linalg::lambda_max_symmetric(reduced);
  require(top > 0.0, ErrorCode::SolveFailure, "degenerate antisymmetric part");
  return 1.0 / top;
}

inline double reversibility_coefficient(const TDGeometry& g) {
  return reversibility_coefficient(g.S_A, g.R_A, g.A);
}

inline double effective_reversibility(const KStepMatrices& k) {
  return reversibility_coefficient(k.S, k.R, k.A);
}

/// Modulus of the second-largest eigenvalue of P (by modulus).
inline double lambda2(const Matrix& p) {
  auto ev = linalg::eigenvalues(p);
  std::vector<double> mod;
  mod.reserve(ev.size());
  for (const auto& z : ev) mod.push_back(std::abs(z));
  std::sort(mod.begin(), mod.end(), std::greater<>());
  if (mod.size() < 2) return 0.0;
  // Rank-one chains leave roundoff-sized moduli behind.
  return mod[1] < 1e-13 ? 0.0 : mod[1];
}

/// mu_min (1 - gamma^k) / mu_max * (gamma lambda2)^{-k}; +inf when gamma lambda2 = 0.
inline double k_step_lower_bound(const Vector& mu, double gamma, int k, double lambda_2) {
  require(k >= 1, ErrorCode::InvalidArgument, "k must be at least 1");
  const double base = gamma * lambda_2;
  if (base == 0.0) return kInfinity;
  return mu.minCoeff() * (1.0 - std::pow(gamma, k)) / mu.maxCoeff() * std::pow(base, -k);
}

/// Gershgorin certificate: lambda_min(S_k) >= mu_min (1 - gamma^k).
inline double gershgorin_smin_bound(const Vector& mu, double gamma, int k) {
  return mu.minCoeff() * (1.0 - std::pow(gamma, k));
}

/// kappa(J J^T) = lambda_max / lambda_min; +inf when lambda_min < 1e-12 lambda_max.
inline double tangent_kernel_condition(const Matrix& j) {
  const Matrix kernel = j * j.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(kernel, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(es.eigenvalues().size() - 1);
  if (hi <= 0.0 || lo < kRankCutoff * hi) return kInfinity;
  return hi / lo;
}

struct ReversibilityReport {
  double rho = kInfinity;
  int k = 1;
  double rho_k = kInfinity;
  double lambda2 = 0.0;
  double lower_bound_k = kInfinity;
  bool is_reversible = false;
};

inline ReversibilityReport reversibility_report(const TDGeometry& g, int k) {
  ReversibilityReport rep;
  rep.rho = reversibility_coefficient(g);
  rep.k = k;
  rep.rho_k = effective_reversibility(k_step_matrix(g, k));
  rep.lambda2 = lambda2(g.P);
  rep.lower_bound_k = k_step_lower_bound(g.mu, g.gamma, k, rep.lambda2);
  rep.is_reversible = g.R_A.norm() < kReversibleThreshold;
  return rep;
}

inline nlohmann::json to_json(const ReversibilityReport& r) {
  return {{"rho", io::number_or_inf(r.rho)},
          {"k", r.k},
          {"rho_k", io::number_or_inf(r.rho_k)},
          {"lambda2", r.lambda2},
          {"lower_bound_k", io::number_or_inf(r.lower_bound_k)},
          {"is_reversible", r.is_reversible}};
}

inline ReversibilityReport reversibility_report_from_json(const nlohmann::json& j) {
  ReversibilityReport r;
  r.rho = io::number_or_inf_from_json(j.at("rho"));
  r.k = j.at("k").get<int>();
  r.rho_k = io::number_or_inf_from_json(j.at("rho_k"));
  r.lambda2 = j.at("lambda2").get<double>();
  r.lower_bound_k = io::number_or_inf_from_json(j.at("lower_bound_k"));
  r.is_reversible = j.at("is_reversible").get<bool>();
  return r;
}

/// Comparison of the worst sampled tangent-kernel condition number with rho.
struct ConditionCheck {
  double max_kappa = 0.0;
  double rho = kInfinity;
  /// rho - max_kappa; +inf when rho is infinite and kappa finite.
  double margin = 0.0;
  bool holds = false;
  Index worst_sample = -1;
};

inline ConditionCheck theorem3_condition(const Approximator& approx, const TDGeometry& g,
                                         const std::vector<Vector>& theta_samples) {
  require(!theta_samples.empty(), ErrorCode::InvalidArgument, "need at least one sample");
  ConditionCheck c;
  c.rho = reversibility_coefficient(g);
  for (std::size_t i = 0; i < theta_samples.size(); ++i) {
    const double kappa = tangent_kernel_condition(approx.jacobian(theta_samples[i]));
    if (kappa > c.max_kappa || c.worst_sample < 0) {
      c.max_kappa = kappa;
      c.worst_sample = static_cast<Index>(i);
    }
  }
  c.holds = c.max_kappa < c.rho;
  if (std::isinf(c.rho) && std::isinf(c.max_kappa))
    c.margin = 0.0;
  else
    c.margin = c.rho - c.max_kappa;
  return c;
}

}  // namespace tdgeo
