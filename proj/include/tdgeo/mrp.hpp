#pragma once

// Finite Markov reward processes and the matrices the TD dynamics are built on.

#include "tdgeo/core.hpp"
#include "tdgeo/linalg.hpp"

#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <variant>
#include <vector>

namespace tdgeo {

inline constexpr double kStochasticTolerance = 1e-12;
inline constexpr double kEpsilon = std::numeric_limits<double>::epsilon();

/// Outcome of the combinatorial chain checks. `failure` is empty for a valid chain.
struct ValidityCertificate {
  std::optional<ErrorCode> failure;
  Index scc_count = 0;
  Index period = 0;
  std::string detail;

  bool valid() const { return !failure.has_value(); }
};

namespace detail {

inline std::vector<std::vector<Index>> positive_digraph(const Matrix& p) {
  std::vector<std::vector<Index>> adj(static_cast<size_t>(p.rows()));
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.cols(); ++j)
      if (p(i, j) > 0.0) adj[static_cast<size_t>(i)].push_back(j);
  return adj;
}

// Tarjan's algorithm; returns the number of strongly connected components.
inline Index count_scc(const std::vector<std::vector<Index>>& adj) {
  const auto n = static_cast<Index>(adj.size());
  std::vector<Index> index(adj.size(), -1), low(adj.size(), 0);
  std::vector<bool> on_stack(adj.size(), false);
  std::vector<Index> stack;
  Index counter = 0, components = 0;

  std::function<void(Index)> connect = [&](Index v) {
    const auto vs = static_cast<size_t>(v);
    index[vs] = low[vs] = counter++;
    stack.push_back(v);
    on_stack[vs] = true;
    for (Index w : adj[vs]) {
      const auto ws = static_cast<size_t>(w);
      if (index[ws] < 0) {
        connect(w);
        low[vs] = std::min(low[vs], low[ws]);
      } else if (on_stack[ws]) {
        low[vs] = std::min(low[vs], index[ws]);
      }
    }
    if (low[vs] == index[vs]) {
      Index w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[static_cast<size_t>(w)] = false;
      } while (w != v);
      ++components;
    }
  };
  for (Index v = 0; v < n; ++v)
    if (index[static_cast<size_t>(v)] < 0) connect(v);
  return components;
}

// Period of a strongly connected digraph: gcd over edges (u,v) of
// level(u) + 1 - level(v), with levels from a BFS rooted at state 0.
inline Index period(const std::vector<std::vector<Index>>& adj) {
  std::vector<Index> level(adj.size(), -1);
  std::vector<Index> queue{0};
  level[0] = 0;
  for (size_t head = 0; head < queue.size(); ++head) {
    const Index u = queue[head];
    for (Index v : adj[static_cast<size_t>(u)]) {
      if (level[static_cast<size_t>(v)] < 0) {
        level[static_cast<size_t>(v)] = level[static_cast<size_t>(u)] + 1;
        queue.push_back(v);
      }
    }
  }
  Index g = 0;
  for (size_t u = 0; u < adj.size(); ++u)
    for (Index v : adj[u]) {
      const Index diff = level[u] + 1 - level[static_cast<size_t>(v)];
      g = std::gcd(g, diff < 0 ? -diff : diff);
    }
  return g;
}

}  // namespace detail

/// Checks stochasticity, irreducibility (single SCC of the positive-entry
/// digraph) and aperiodicity (cycle-length gcd of 1). Never throws for
/// square finite input.
inline ValidityCertificate validate(const Matrix& p) {
  ValidityCertificate cert;
  if (p.rows() != p.cols() || p.rows() == 0) {
    cert.failure = ErrorCode::ShapeMismatch;
    cert.detail = "transition matrix must be square and nonempty";
    return cert;
  }
  if (!p.allFinite()) {
    cert.failure = ErrorCode::NotStochastic;
    cert.detail = "transition matrix has non-finite entries";
    return cert;
  }
  for (Index i = 0; i < p.rows(); ++i) {
    const double sum = p.row(i).sum();
    if (p.row(i).minCoeff() < 0.0 || std::abs(sum - 1.0) > kStochasticTolerance) {
      std::ostringstream os;
      os.precision(17);
      os << "row " << i << " sums to " << sum << " (min entry " << p.row(i).minCoeff() << ")";
      cert.failure = ErrorCode::NotStochastic;
      cert.detail = os.str();
      return cert;
    }
  }
  const auto adj = detail::positive_digraph(p);
  cert.scc_count = detail::count_scc(adj);
  if (cert.scc_count != 1) {
    cert.failure = ErrorCode::Reducible;
    cert.detail = std::to_string(cert.scc_count) + " strongly connected components";
    return cert;
  }
  cert.period = detail::period(adj);
  if (cert.period != 1) {
    cert.failure = ErrorCode::Periodic;
    cert.detail = "chain has period " + std::to_string(cert.period);
    return cert;
  }
  return cert;
}

/// Reward given per state (R) or per transition (r(s, s')).
using Reward = std::variant<Vector, Matrix>;

class MarkovRewardProcess {
 public:
  /// Throws Error carrying the failed certificate property. Rows within the
  /// stochasticity tolerance are renormalized to sum to one.
  MarkovRewardProcess(Matrix p, Reward reward, double gamma)
      : p_(std::move(p)), reward_(std::move(reward)), gamma_(gamma) {
    require(std::isfinite(gamma_) && gamma_ >= 0.0 && gamma_ < 1.0, ErrorCode::InvalidArgument,
            "gamma must lie in [0, 1)");
    const auto cert = validate(p_);
    if (!cert.valid()) throw Error(*cert.failure, cert.detail);
    // Rows already stochastic to roundoff are left untouched, so that
    // serialization round trips are exact.
    const double roundoff = 8.0 * static_cast<double>(p_.rows()) * kEpsilon;
    for (Index i = 0; i < p_.rows(); ++i) {
      const double sum = p_.row(i).sum();
      if (std::abs(sum - 1.0) > roundoff) p_.row(i) /= sum;
    }
    certificate_ = cert;

    const Index n = p_.rows();
    if (const auto* r = std::get_if<Vector>(&reward_)) {
      require(r->size() == n, ErrorCode::ShapeMismatch, "reward vector length differs from n");
      require(r->allFinite(), ErrorCode::InvalidArgument, "reward vector is not finite");
    } else {
      const auto& m = std::get<Matrix>(reward_);
      require(m.rows() == n && m.cols() == n, ErrorCode::ShapeMismatch,
              "reward matrix must be n x n");
      require(m.allFinite(), ErrorCode::InvalidArgument, "reward matrix is not finite");
    }
  }

  Index n() const { return p_.rows(); }
  const Matrix& P() const { return p_; }
  const Reward& reward() const { return reward_; }
  double gamma() const { return gamma_; }
  const ValidityCertificate& certificate() const { return certificate_; }

  MarkovRewardProcess with_gamma(double gamma) const { return {p_, reward_, gamma}; }
  MarkovRewardProcess with_reward(Reward reward) const { return {p_, std::move(reward), gamma_}; }

 private:
  Matrix p_;
  Reward reward_;
  double gamma_;
  ValidityCertificate certificate_;
};

/// mu^T P = mu^T with sum(mu) = 1, by a direct solve in which the last
/// equation of (P^T - I) mu = 0 is replaced by the normalization.
inline Vector stationary_distribution(const Matrix& p) {
  const Index n = p.rows();
  Matrix m = p.transpose() - Matrix::Identity(n, n);
  m.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  Eigen::FullPivLU<Matrix> lu(m);
  lu.setThreshold(1e-13);
  require(lu.rank() == n, ErrorCode::SingularSolve,
          "stationary system is rank deficient beyond the expected null space");
  Vector mu = lu.solve(rhs);
  require(mu.minCoeff() > 0.0, ErrorCode::SingularSolve,
          "stationary solve produced a non-positive entry");
  return mu;
}

inline Vector stationary_distribution(const MarkovRewardProcess& mrp) {
  return stationary_distribution(mrp.P());
}

inline Vector expected_reward(const MarkovRewardProcess& mrp) {
  if (const auto* r = std::get_if<Vector>(&mrp.reward())) return *r;
  const auto& m = std::get<Matrix>(mrp.reward());
  require(m.rows() == mrp.n() && m.cols() == mrp.n(), ErrorCode::ShapeMismatch,
          "reward matrix must be n x n");
  return mrp.P().cwiseProduct(m).rowwise().sum();
}

/// Solves (I - gamma P) V* = R.
inline Vector true_value(const MarkovRewardProcess& mrp) {
  const Index n = mrp.n();
  const Matrix m = Matrix::Identity(n, n) - mrp.gamma() * mrp.P();
  return m.partialPivLu().solve(expected_reward(mrp));
}

inline double mu_norm(const Vector& mu, const Vector& v) {
  return std::sqrt((mu.array() * v.array().square()).sum());
}

/// Derived quantities of an MRP consumed by the spectral, dynamics and
/// verification code. Treated as immutable after td_matrix builds it.
struct TDGeometry {
  Index n = 0;
  double gamma = 0.0;
  Matrix P;
  Vector mu;
  Matrix D_mu;
  Vector R;
  Vector V_star;
  Matrix A;
  Matrix S_A;
  Matrix R_A;
  /// ||(I - gamma P) V*||_mu / (1 - gamma), the attracting radius for homogeneous approximators.
  double B = 0.0;
  double lambda_min_S_A = 0.0;
};

inline double mu_norm(const TDGeometry& g, const Vector& v) { return mu_norm(g.mu, v); }

inline TDGeometry td_matrix(const MarkovRewardProcess& mrp) {
  TDGeometry g;
  g.n = mrp.n();
  g.gamma = mrp.gamma();
  g.P = mrp.P();
  g.mu = stationary_distribution(mrp);
  g.D_mu = g.mu.asDiagonal();
  g.R = expected_reward(mrp);
  g.V_star = true_value(mrp);
  const Matrix i_minus = Matrix::Identity(g.n, g.n) - g.gamma * g.P;
  g.A = g.D_mu * i_minus;
  g.S_A = linalg::symmetric_part(g.A);
  g.R_A = g.A - g.S_A;
  g.B = mu_norm(g.mu, i_minus * g.V_star) / (1.0 - g.gamma);
  g.lambda_min_S_A = linalg::lambda_min_symmetric(g.S_A);
  require(g.lambda_min_S_A > 0.0, ErrorCode::PositivityViolation,
          "symmetric part of A is not positive definite");
  return g;
}

struct KStepMatrices {
  Matrix A;
  Matrix S;
  Matrix R;
};

/// A_k = D_mu (I - (gamma P)^k), split into symmetric and antisymmetric parts.
inline KStepMatrices k_step_matrix(const TDGeometry& g, int k) {
  require(k >= 1, ErrorCode::InvalidArgument, "k must be at least 1");
  KStepMatrices out;
  if (k == 1) {
    out.A = g.A;
    out.S = g.S_A;
    out.R = g.R_A;
    return out;
  }
  const Matrix gp = g.gamma * g.P;
  Matrix power = gp;
  for (int i = 1; i < k; ++i) power = power * gp;
  out.A = g.D_mu * (Matrix::Identity(g.n, g.n) - power);
  out.S = linalg::symmetric_part(out.A);
  out.R = out.A - out.S;
  return out;
}

/// n-state cycle: each state keeps `self_loop`, moves backward around the
/// cycle (s -> s-1) with the remaining forward mass and forward (s -> s+1)
/// with `delta`. n = 3, delta = 0 is the three-state spiral chain.
inline MarkovRewardProcess cycle_mrp(Index n, double delta, double self_loop = 0.5,
                                     double gamma = 0.9) {
  require(n >= 3, ErrorCode::InvalidArgument, "cycle chain needs at least 3 states");
  const double forward = 1.0 - self_loop - delta;
  require(self_loop >= 0.0 && delta >= 0.0 && delta <= 0.5 && forward >= -kStochasticTolerance,
          ErrorCode::InvalidProbability, "cycle probabilities must be nonnegative");
  Matrix p = Matrix::Zero(n, n);
  for (Index s = 0; s < n; ++s) {
    p(s, s) += self_loop;
    p(s, (s + n - 1) % n) += std::max(forward, 0.0);
    p(s, (s + 1) % n) += delta;
  }
  return {p, Vector(Vector::Zero(n)), gamma};
}

/// Strictly positive random chain (normalized exponential weights per row)
/// with rewards uniform on [-1, 1]. Deterministic in `seed`.
inline MarkovRewardProcess random_mrp(Index n, double gamma, std::uint64_t seed) {
  require(n >= 2, ErrorCode::InvalidArgument, "random chain needs at least 2 states");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix p(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) p(i, j) = -std::log1p(-unit(rng)) + 1e-3;
    p.row(i) /= p.row(i).sum();
  }
  Vector r(n);
  for (Index i = 0; i < n; ++i) r(i) = 2.0 * unit(rng) - 1.0;
  return {p, r, gamma};
}

}  // namespace tdgeo
