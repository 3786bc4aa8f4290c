#pragma once

// Parametric value-function families with analytic Jacobians.

#include "tdgeo/approximator.hpp"
#include "tdgeo/linalg.hpp"
#include "tdgeo/mrp.hpp"
#include "tdgeo/mrp_io.hpp"

#include <cmath>
#include <random>
#include <utility>
#include <vector>

namespace tdgeo {

// ---------------------------------------------------------------------------
// Tabular and linear

class TabularApproximator final : public Approximator {
 public:
  explicit TabularApproximator(Index n) : n_(n) {
    require(n >= 1, ErrorCode::InvalidArgument, "tabular needs n >= 1");
  }
  std::string kind() const override { return "tabular"; }
  Index param_dim() const override { return n_; }
  Index state_dim() const override { return n_; }
  Vector value(const Vector& theta) const override {
    check_theta(theta);
    return theta;
  }
  Matrix jacobian(const Vector& theta) const override {
    check_theta(theta);
    return Matrix::Identity(n_, n_);
  }
  std::optional<double> degree() const override { return 1.0; }
  nlohmann::json to_json() const override { return {{"kind", kind()}, {"n", n_}}; }

 private:
  Index n_;
};

class LinearApproximator final : public Approximator {
 public:
  explicit LinearApproximator(Matrix phi) : phi_(std::move(phi)) {
    require(phi_.rows() >= 1 && phi_.cols() >= 1, ErrorCode::ShapeMismatch, "empty features");
    require(linalg::numerical_rank(phi_) == phi_.cols(), ErrorCode::RankDeficient,
            "feature matrix must have full column rank");
  }
  std::string kind() const override { return "linear"; }
  Index param_dim() const override { return phi_.cols(); }
  Index state_dim() const override { return phi_.rows(); }
  Vector value(const Vector& theta) const override {
    check_theta(theta);
    return phi_ * theta;
  }
  Matrix jacobian(const Vector& theta) const override {
    check_theta(theta);
    return phi_;
  }
  std::optional<double> degree() const override { return 1.0; }
  nlohmann::json to_json() const override {
    return {{"kind", kind()}, {"Phi", io::to_json(phi_)}};
  }
  const Matrix& features() const { return phi_; }

 private:
  Matrix phi_;
};

/// mu-weighted orthogonal projection onto span(Phi): Phi (Phi^T D Phi)^{-1} Phi^T D.
inline Matrix mu_projection(const Matrix& phi, const Vector& mu) {
  const Matrix dphi = mu.asDiagonal() * phi;
  const Matrix gram = phi.transpose() * dphi;
  return phi * gram.ldlt().solve(dphi.transpose());
}

struct LinearFixedPoint {
  Vector theta_star;
  /// ||V* - Pi V*||_mu / (1 - gamma)
  double bound = 0.0;
  /// ||Phi theta* - V*||_mu
  double error = 0.0;
};

/// theta* = (Phi^T A Phi)^{-1} Phi^T A V*, with the classical error bound.
inline LinearFixedPoint linear_fixed_point(const Matrix& phi, const TDGeometry& g) {
  require(phi.rows() == g.n, ErrorCode::ShapeMismatch, "features must have n rows");
  require(linalg::numerical_rank(phi) == phi.cols(), ErrorCode::RankDeficient,
          "feature matrix must have full column rank");
  const Matrix m = phi.transpose() * g.A * phi;
  Eigen::FullPivLU<Matrix> lu(m);
  require(lu.isInvertible(), ErrorCode::SolveFailure, "Phi^T A Phi is singular");
  LinearFixedPoint out;
  out.theta_star = lu.solve(phi.transpose() * g.A * g.V_star);
  const Vector proj = mu_projection(phi, g.mu) * g.V_star;
  out.bound = mu_norm(g.mu, g.V_star - proj) / (1.0 - g.gamma);
  out.error = mu_norm(g.mu, phi * out.theta_star - g.V_star);
  require(out.error <= out.bound + 1e-9, ErrorCode::SolveFailure,
          "linear fixed point violates its error bound");
  return out;
}

// ---------------------------------------------------------------------------
// Homogeneous networks  f = sigma(... sigma(sigma(Phi th_1) th_2) ... th_L)

enum class Activation { Relu, Square };

inline std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "square"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "square") return Activation::Square;
  throw Error(ErrorCode::InvalidArgument, "unknown activation \"" + s + "\"");
}

/// Degree p of the activation: sigma(a x) = a^p sigma(x) for a > 0.
inline double activation_degree(Activation a) { return a == Activation::Relu ? 1.0 : 2.0; }

class HomogeneousNetwork final : public Approximator {
 public:
  /// `layer_dims` = {p, d_2, ..., d_L, 1}; layer i maps width dims[i-1] to dims[i].
  HomogeneousNetwork(std::vector<Index> layer_dims, Matrix phi, Activation activation,
                     Vector initial_theta)
      : dims_(std::move(layer_dims)), phi_(std::move(phi)), activation_(activation),
        initial_(std::move(initial_theta)) {
    require(dims_.size() >= 2, ErrorCode::ShapeMismatch, "network needs at least one layer");
    require(dims_.front() == phi_.cols(), ErrorCode::ShapeMismatch,
            "first layer width must equal the feature dimension");
    require(dims_.back() == 1, ErrorCode::ShapeMismatch, "last layer must have width 1");
    offsets_.push_back(0);
    for (std::size_t i = 1; i < dims_.size(); ++i) {
      require(dims_[i] >= 1, ErrorCode::ShapeMismatch, "layer widths must be positive");
      offsets_.push_back(offsets_.back() + dims_[i - 1] * dims_[i]);
    }
    require(initial_.size() == offsets_.back(), ErrorCode::ShapeMismatch,
            "initial weights have the wrong length");
  }

  std::string kind() const override { return "homogeneous"; }
  Index param_dim() const override { return offsets_.back(); }
  Index state_dim() const override { return phi_.rows(); }
  Vector initial_theta() const override { return initial_; }

  int depth() const { return static_cast<int>(dims_.size()) - 1; }
  Activation activation() const { return activation_; }
  const std::vector<Index>& layer_dims() const { return dims_; }
  const Matrix& features() const { return phi_; }

  /// p^{L-i+1} for layer i in 1..L.
  double layer_factor(int i) const {
    return std::pow(activation_degree(activation_), depth() - i + 1);
  }

  std::optional<double> degree() const override {
    double d = 0.0;
    for (int i = 1; i <= depth(); ++i) d += layer_factor(i);
    return d;
  }

  /// Parameter index range [begin, end) of layer i (1-based).
  std::pair<Index, Index> layer_range(int i) const {
    return {offsets_[static_cast<std::size_t>(i - 1)], offsets_[static_cast<std::size_t>(i)]};
  }

  /// Pre-activations G_1..G_L for every state (rows).
  std::vector<Matrix> pre_activations(const Vector& theta) const {
    check_theta(theta);
    std::vector<Matrix> pre;
    Matrix f = phi_;
    for (int i = 1; i <= depth(); ++i) {
      Matrix g = f * weight(theta, i);
      f = g.unaryExpr([this](double x) { return sigma(x); });
      pre.push_back(std::move(g));
    }
    return pre;
  }

  Vector value(const Vector& theta) const override {
    check_theta(theta);
    Matrix f = phi_;
    for (int i = 1; i <= depth(); ++i)
      f = (f * weight(theta, i)).unaryExpr([this](double x) { return sigma(x); });
    return f.col(0);
  }

  Matrix jacobian(const Vector& theta) const override {
    check_theta(theta);
    const int depth_l = depth();
    std::vector<Matrix> inputs;  // F_0 .. F_{L-1}
    std::vector<Matrix> pre;     // G_1 .. G_L
    Matrix f = phi_;
    for (int i = 1; i <= depth_l; ++i) {
      inputs.push_back(f);
      Matrix g = f * weight(theta, i);
      f = g.unaryExpr([this](double x) { return sigma(x); });
      pre.push_back(std::move(g));
    }
    Matrix jac = Matrix::Zero(state_dim(), param_dim());
    for (Index s = 0; s < state_dim(); ++s) {
      Eigen::RowVectorXd delta =
          pre.back().row(s).unaryExpr([this](double x) { return dsigma(x); });
      for (int i = depth_l; i >= 1; --i) {
        const auto idx = static_cast<std::size_t>(i - 1);
        // d f / d (theta_i)_{bc} = F_{i-1}[s, b] * delta[c], column-major vec.
        const Matrix block = inputs[idx].row(s).transpose() * delta;
        const auto [begin, end] = layer_range(i);
        jac.row(s).segment(begin, end - begin) =
            Eigen::Map<const Eigen::RowVectorXd>(block.data(), block.size());
        if (i > 1) {
          const Eigen::RowVectorXd back = delta * weight(theta, i).transpose();
          delta = back.cwiseProduct(
              pre[idx - 1].row(s).unaryExpr([this](double x) { return dsigma(x); }));
        }
      }
    }
    return jac;
  }

  nlohmann::json to_json() const override {
    return {{"kind", kind()},
            {"layer_dims", dims_},
            {"activation", to_string(activation_)},
            {"Phi", io::to_json(phi_)},
            {"theta", io::to_json(initial_)}};
  }

 private:
  Matrix weight(const Vector& theta, int i) const {
    const auto [begin, end] = layer_range(i);
    const Index rows = dims_[static_cast<std::size_t>(i - 1)];
    const Index cols = dims_[static_cast<std::size_t>(i)];
    return Eigen::Map<const Matrix>(theta.data() + begin, rows, cols);
  }

  double sigma(double x) const {
    return activation_ == Activation::Relu ? (x > 0.0 ? x : 0.0) : x * x;
  }
  // ReLU subgradient at 0 is 0, so sigma(x) = sigma'(x) x holds at the kink too.
  double dsigma(double x) const {
    return activation_ == Activation::Relu ? (x > 0.0 ? 1.0 : 0.0) : 2.0 * x;
  }

  std::vector<Index> dims_;
  std::vector<Index> offsets_;
  Matrix phi_;
  Activation activation_;
  Vector initial_;
};

/// Weights drawn N(0, 1/fan_in) per layer, deterministic in `seed`.
inline Vector init_weights(const std::vector<Index>& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Index total = 0;
  for (std::size_t i = 1; i < dims.size(); ++i) total += dims[i - 1] * dims[i];
  Vector theta(total);
  Index k = 0;
  for (std::size_t i = 1; i < dims.size(); ++i) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims[i - 1]));
    for (Index j = 0; j < dims[i - 1] * dims[i]; ++j) theta(k++) = scale * normal(rng);
  }
  return theta;
}

inline std::shared_ptr<HomogeneousNetwork> homogeneous_network(std::vector<Index> layer_dims,
                                                               Matrix phi, Activation activation,
                                                               std::uint64_t seed) {
  Vector w = init_weights(layer_dims, seed);
  return std::make_shared<HomogeneousNetwork>(std::move(layer_dims), std::move(phi), activation,
                                              std::move(w));
}

/// Gaussian n x p feature matrix, deterministic in `seed`.
inline Matrix random_features(Index n, Index p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix phi(n, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < n; ++i) phi(i, j) = normal(rng);
  return phi;
}

// ---------------------------------------------------------------------------
// Residual-homogeneous  V(th_1, th_2) = Phi th_1 + g(th_2)

class ResidualNetwork final : public Approximator {
 public:
  ResidualNetwork(Matrix phi, std::shared_ptr<const HomogeneousNetwork> inner)
      : phi_(std::move(phi)), inner_(std::move(inner)) {
    require(inner_ != nullptr, ErrorCode::InvalidArgument, "missing inner network");
    require(inner_->state_dim() == phi_.rows(), ErrorCode::ShapeMismatch,
            "inner network output dimension must equal n");
    require(linalg::numerical_rank(phi_) == phi_.cols(), ErrorCode::RankDeficient,
            "residual feature matrix must have full column rank");
  }

  std::string kind() const override { return "residual"; }
  Index linear_dim() const { return phi_.cols(); }
  Index param_dim() const override { return phi_.cols() + inner_->param_dim(); }
  Index state_dim() const override { return phi_.rows(); }
  const Matrix& features() const { return phi_; }
  const HomogeneousNetwork& inner() const { return *inner_; }

  Vector initial_theta() const override {
    Vector t = Vector::Zero(param_dim());
    t.tail(inner_->param_dim()) = inner_->initial_theta();
    return t;
  }

  Vector value(const Vector& theta) const override {
    check_theta(theta);
    return phi_ * theta.head(linear_dim()) + inner_->value(theta.tail(inner_->param_dim()));
  }

  Matrix jacobian(const Vector& theta) const override {
    check_theta(theta);
    Matrix j(state_dim(), param_dim());
    j.leftCols(linear_dim()) = phi_;
    j.rightCols(inner_->param_dim()) = inner_->jacobian(theta.tail(inner_->param_dim()));
    return j;
  }

  nlohmann::json to_json() const override {
    return {{"kind", kind()}, {"Phi", io::to_json(phi_)}, {"inner", inner_->to_json()}};
  }

 private:
  Matrix phi_;
  std::shared_ptr<const HomogeneousNetwork> inner_;
};

// ---------------------------------------------------------------------------
// Well-conditioned nonlinear family  V(th) = th + beta tanh(W th)

class PerturbedTabular final : public Approximator {
 public:
  PerturbedTabular(double beta, Matrix w) : beta_(beta), w_(std::move(w)) {
    require(w_.rows() == w_.cols(), ErrorCode::ShapeMismatch, "mixing matrix must be square");
  }
  std::string kind() const override { return "perturbed_tabular"; }
  Index param_dim() const override { return w_.cols(); }
  Index state_dim() const override { return w_.rows(); }
  double beta() const { return beta_; }
  const Matrix& mixing() const { return w_; }

  Vector value(const Vector& theta) const override {
    check_theta(theta);
    return theta + beta_ * (w_ * theta).array().tanh().matrix();
  }
  Matrix jacobian(const Vector& theta) const override {
    check_theta(theta);
    const Eigen::ArrayXd c = (w_ * theta).array().tanh();
    const Vector sech2 = (1.0 - c.square()).matrix();
    return Matrix::Identity(w_.rows(), w_.cols()) + beta_ * sech2.asDiagonal() * w_;
  }
  nlohmann::json to_json() const override {
    return {{"kind", kind()}, {"beta", beta_}, {"W", io::to_json(w_)}};
  }

 private:
  double beta_;
  Matrix w_;
};

/// Random n x n mixing matrix scaled to unit spectral norm, so that
/// sigma(J) lies in [1 - beta, 1 + beta].
inline Matrix unit_mixing_matrix(Index n, std::uint64_t seed) {
  Matrix w = random_features(n, n, seed);
  return w / linalg::singular_values(w)(0);
}

// ---------------------------------------------------------------------------
// Divergent spiral family  V(th, th_bar) = exp((Q + eps I) th) V0 + W th_bar

class DivergentApproximator final : public Approximator {
 public:
  struct Parts {
    Matrix Q;
    double epsilon = 0.0;
    Vector V0;
    Matrix W;  // n x r, r may be 0
    // Construction metadata (not needed for evaluation).
    Matrix U;
    double a = 0.0;
    double b = 0.0;
    double C = 0.0;
  };

  explicit DivergentApproximator(Parts parts) : p_(std::move(parts)) {
    const Index n = p_.Q.rows();
    require(p_.Q.cols() == n && p_.V0.size() == n, ErrorCode::ShapeMismatch,
            "divergent: Q must be n x n and V0 length n");
    if (p_.W.size() == 0) p_.W = Matrix::Zero(n, 0);
    require(p_.W.rows() == n, ErrorCode::ShapeMismatch, "divergent: W must have n rows");
    require(p_.epsilon > 0.0, ErrorCode::InvalidArgument, "divergent: epsilon must be positive");
    generator_ = p_.Q + p_.epsilon * Matrix::Identity(n, n);
  }

  std::string kind() const override { return "divergent"; }
  Index param_dim() const override { return 1 + p_.W.cols(); }
  Index state_dim() const override { return p_.Q.rows(); }
  const Parts& parts() const { return p_; }
  /// Q + eps I
  const Matrix& generator() const { return generator_; }

  /// exp((Q + eps I) th) V0; refuses eps |th| > 700.
  Vector spiral(double th) const {
    require(p_.epsilon * std::abs(th) <= 700.0, ErrorCode::DivergedBeyondRange,
            "spiral parameter beyond the representable range");
    return linalg::expm(generator_ * th) * p_.V0;
  }

  Vector value(const Vector& theta) const override {
    check_theta(theta);
    return spiral(theta(0)) + p_.W * theta.tail(p_.W.cols());
  }

  Matrix jacobian(const Vector& theta) const override {
    check_theta(theta);
    Matrix j(state_dim(), param_dim());
    j.col(0) = generator_ * spiral(theta(0));
    j.rightCols(p_.W.cols()) = p_.W;
    return j;
  }

  nlohmann::json to_json() const override {
    return {{"kind", kind()},   {"Q", io::to_json(p_.Q)},  {"epsilon", p_.epsilon},
            {"V0", io::to_json(p_.V0)}, {"W", io::to_json(p_.W)}, {"U", io::to_json(p_.U)},
            {"a", p_.a},        {"b", p_.b},               {"C", p_.C}};
  }

 private:
  Parts p_;
  Matrix generator_;
};

enum class V0Mode { U1, U2, Sum };

/// Builds the spiral approximator from the complex eigenpair a + bi of A with
/// the largest |b| (ties: largest a). With U = [Re v, Im v], AU = U Lambda,
/// Lambda = [[a, b], [-b, a]] and G = U^T U, Q = U G^{-1} M G^{-1} U^T with
/// M = -((a^2 + b^2) / b) [[0, 1], [-1, 0]]. M is antisymmetric, so exp(Q th)
/// preserves ||V|| on E = span(U) and V^T Q^T A V = -(a^2 + b^2)|z|^2 for V = U z.
/// eps = fraction * min((a^2 + b^2) / C, (a^2 + b^2) / lambda_max(sym(G Lambda))),
/// C = lambda_max(G); the second term keeps d th/dt > 0 when lambda_max(S_A) > 1.
/// The optional extension W spans part of (A^T E)^perp, so the extra
/// directions never feed back into d th / dt.
inline std::shared_ptr<DivergentApproximator> construct_divergent(const TDGeometry& g,
                                                                  double epsilon_fraction = 0.5,
                                                                  V0Mode v0_mode = V0Mode::U1,
                                                                  Index extension_rank = 0) {
  require(epsilon_fraction > 0.0 && epsilon_fraction < 1.0, ErrorCode::InvalidArgument,
          "epsilon_fraction must lie in (0, 1)");
  require(extension_rank >= 0 && extension_rank <= g.n - 2, ErrorCode::InvalidArgument,
          "extension_rank must lie in 0..n-2");
  const auto pairs = linalg::complex_eigenpairs(g.A);
  if (pairs.empty()) {
    std::ostringstream os;
    os.precision(12);
    os << "A has a real spectrum {";
    const auto ev = linalg::eigenvalues(g.A);
    for (std::size_t i = 0; i < ev.size(); ++i) os << (i ? ", " : "") << ev[i].real();
    os << "}";
    throw Error(ErrorCode::NoComplexEigenvalue, os.str());
  }
  const auto& pair = pairs.front();
  DivergentApproximator::Parts p;
  p.a = pair.value.real();
  p.b = pair.value.imag();
  const Index n = g.n;
  p.U.resize(n, 2);
  p.U.col(0) = pair.vector.real();
  p.U.col(1) = pair.vector.imag();

  const Matrix gram = p.U.transpose() * p.U;
  const Matrix gram_inv = gram.inverse();
  Matrix lam(2, 2);
  lam << p.a, p.b, -p.b, p.a;
  const double r2 = p.a * p.a + p.b * p.b;
  Matrix m(2, 2);
  m << 0.0, -r2 / p.b, r2 / p.b, 0.0;
  p.Q = p.U * gram_inv * m * gram_inv * p.U.transpose();
  p.C = linalg::lambda_max_symmetric(gram);
  const double eps_bound = r2 / p.C;
  const double eps_cap = r2 / linalg::lambda_max_symmetric(linalg::symmetric_part(gram * lam));
  p.epsilon = epsilon_fraction * std::min(eps_bound, eps_cap);

  switch (v0_mode) {
    case V0Mode::U1: p.V0 = p.U.col(0).normalized(); break;
    case V0Mode::U2: p.V0 = p.U.col(1).normalized(); break;
    case V0Mode::Sum: p.V0 = (p.U.col(0) + p.U.col(1)).normalized(); break;
  }
  const Matrix complement = linalg::orthogonal_complement(g.A.transpose() * p.U);
  p.W = complement.leftCols(extension_rank);
  return std::make_shared<DivergentApproximator>(std::move(p));
}

// ---------------------------------------------------------------------------
// Homogeneity checks

struct HomogeneityReport {
  double degree = 0.0;
  double max_scaling_error = 0.0;  // relative, f(a th) vs a^D f(th)
  double max_euler_error = 0.0;    // relative, J(th) th vs D f(th)
  double tolerance = 0.0;
  bool passed = false;
};

inline double relative_error(const Vector& got, const Vector& want) {
  const double scale = std::max(want.cwiseAbs().maxCoeff(), 1e-300);
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

inline HomogeneityReport check_homogeneity(const Approximator& approx, double degree,
                                           const std::vector<Vector>& samples,
                                           const std::vector<double>& alphas,
                                           double tolerance = 1e-10) {
  HomogeneityReport r;
  r.degree = degree;
  r.tolerance = tolerance;
  for (const auto& th : samples) {
    const Vector f = approx.value(th);
    for (double a : alphas)
      r.max_scaling_error = std::max(
          r.max_scaling_error, relative_error(approx.value(a * th), std::pow(a, degree) * f));
    r.max_euler_error =
        std::max(r.max_euler_error, relative_error(approx.jacobian(th) * th, degree * f));
  }
  r.passed = r.max_scaling_error <= tolerance && r.max_euler_error <= tolerance;
  return r;
}

/// Max relative error of dF/dvec(th_i) . vec(th_i) = p^{L-i+1} f over layers,
/// at one parameter vector.
inline double per_layer_identity_error(const HomogeneousNetwork& net, const Vector& theta) {
  const Vector f = net.value(theta);
  const Matrix j = net.jacobian(theta);
  double worst = 0.0;
  for (int i = 1; i <= net.depth(); ++i) {
    const auto [begin, end] = net.layer_range(i);
    const Vector lhs = j.middleCols(begin, end - begin) * theta.segment(begin, end - begin);
    worst = std::max(worst, relative_error(lhs, net.layer_factor(i) * f));
  }
  return worst;
}

/// Draws N(0, scale^2) parameter vectors, rejecting ReLU samples whose
/// pre-activations come within `margin` of a kink.
inline std::vector<Vector> kink_free_samples(const Approximator& approx, std::size_t count,
                                             std::uint64_t seed, double scale = 1.0,
                                             double margin = 1e-3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  const auto* net = dynamic_cast<const HomogeneousNetwork*>(&approx);
  const auto* res = dynamic_cast<const ResidualNetwork*>(&approx);
  if (res) net = &res->inner();
  std::vector<Vector> out;
  std::size_t attempts = 0;
  while (out.size() < count) {
    require(++attempts < 100000 * (count + 1), ErrorCode::InvalidArgument,
            "could not draw kink-free samples");
    Vector th(approx.param_dim());
    for (Index i = 0; i < th.size(); ++i) th(i) = normal(rng);
    if (net && net->activation() == Activation::Relu) {
      const Vector inner = res ? Vector(th.tail(net->param_dim())) : th;
      bool ok = true;
      for (const auto& g : net->pre_activations(inner))
        if (g.cwiseAbs().minCoeff() < margin) ok = false;
      if (!ok) continue;
    }
    out.push_back(std::move(th));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

/// Rebuilds an approximator from its JSON spec. Divergent specs without an
/// explicit Q are constructed from `geometry` using "epsilon_fraction",
/// "v0_mode" and "extension_rank".
inline ApproximatorPtr approximator_from_json(const nlohmann::json& j,
                                              const TDGeometry* geometry = nullptr) {
  require(j.is_object() && j.contains("kind"), ErrorCode::ParseError,
          "approximator spec needs a \"kind\"");
  const auto kind = j["kind"].get<std::string>();
  const auto n_from_geometry = [&]() {
    require(geometry != nullptr, ErrorCode::InvalidArgument,
            kind + " spec needs an MRP to infer its dimension");
    return geometry->n;
  };
  if (kind == "tabular") {
    const Index n = j.contains("n") ? j["n"].get<Index>() : n_from_geometry();
    return std::make_shared<TabularApproximator>(n);
  }
  if (kind == "linear") return std::make_shared<LinearApproximator>(io::matrix_from_json(j.at("Phi"), "Phi"));
  if (kind == "homogeneous") {
    const auto dims = j.at("layer_dims").get<std::vector<Index>>();
    const Matrix phi = j.contains("Phi") ? io::matrix_from_json(j["Phi"], "Phi")
                                         : Matrix(Matrix::Identity(n_from_geometry(), dims.front()));
    const Activation act = activation_from_string(j.value("activation", "relu"));
    if (j.contains("theta"))
      return std::make_shared<HomogeneousNetwork>(dims, phi, act,
                                                  io::vector_from_json(j["theta"], "theta"));
    return homogeneous_network(dims, phi, act, j.value("seed", std::uint64_t{0}));
  }
  if (kind == "residual") {
    const Matrix phi = io::matrix_from_json(j.at("Phi"), "Phi");
    nlohmann::json inner = j.at("inner");
    inner["kind"] = "homogeneous";
    if (!inner.contains("seed") && j.contains("seed")) inner["seed"] = j["seed"];
    auto net = std::dynamic_pointer_cast<const HomogeneousNetwork>(
        approximator_from_json(inner, geometry));
    return std::make_shared<ResidualNetwork>(phi, std::move(net));
  }
  if (kind == "perturbed_tabular")
    return std::make_shared<PerturbedTabular>(j.at("beta").get<double>(),
                                              io::matrix_from_json(j.at("W"), "W"));
  if (kind == "divergent") {
    if (j.contains("Q")) {
      DivergentApproximator::Parts p;
      p.Q = io::matrix_from_json(j["Q"], "Q");
      p.epsilon = j.at("epsilon").get<double>();
      p.V0 = io::vector_from_json(j.at("V0"), "V0");
      const Index n = p.Q.rows();
      p.W = (j.contains("W") && !j["W"].empty()) ? io::matrix_from_json(j["W"], "W")
                                                 : Matrix(Matrix::Zero(n, 0));
      if (j.contains("U") && !j["U"].empty()) p.U = io::matrix_from_json(j["U"], "U");
      p.a = j.value("a", 0.0);
      p.b = j.value("b", 0.0);
      p.C = j.value("C", 0.0);
      return std::make_shared<DivergentApproximator>(std::move(p));
    }
    require(geometry != nullptr, ErrorCode::InvalidArgument,
            "divergent spec without Q needs an MRP to construct from");
    const std::string mode = j.value("v0_mode", "u1");
    const V0Mode v0 = mode == "u2" ? V0Mode::U2 : mode == "sum" ? V0Mode::Sum : V0Mode::U1;
    return construct_divergent(*geometry, j.value("epsilon_fraction", 0.5), v0,
                               j.value("extension_rank", Index{0}));
  }
  throw Error(ErrorCode::ParseError, "unknown approximator kind \"" + kind + "\"");
}

}  // namespace tdgeo
