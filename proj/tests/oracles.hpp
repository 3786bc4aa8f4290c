#pragma once

// Reference computations that share no code path with the library.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// mu^T P^t from the uniform start until it stops moving.
inline Vector power_iteration_stationary(const Matrix& p, int max_iter = 200000) {
  Vector mu = Vector::Constant(p.rows(), 1.0 / p.rows());
  for (int i = 0; i < max_iter; ++i) {
    Vector next = p.transpose() * mu;
    // Lazy step so periodic-looking chains still settle.
    next = 0.5 * (next + mu);
    if ((next - mu).lpNorm<1>() < 1e-16) return next;
    mu = next;
  }
  return mu;
}

/// sum_t (gamma P)^t R, truncated when the term is negligible.
inline Vector neumann_value(const Matrix& p, const Vector& r, double gamma) {
  Vector v = Vector::Zero(r.size());
  Vector term = r;
  for (int t = 0; t < 100000 && term.lpNorm<Eigen::Infinity>() > 1e-17; ++t) {
    v += term;
    term = gamma * (p * term);
  }
  return v;
}

/// Taylor series with repeated halving, then squaring.
inline Matrix taylor_expm(const Matrix& a) {
  int s = 0;
  double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  while (norm > 0.5) {
    norm /= 2.0;
    ++s;
  }
  const Matrix x = a / std::pow(2.0, s);
  Matrix result = Matrix::Identity(a.rows(), a.cols());
  Matrix term = result;
  for (int k = 1; k < 40; ++k) {
    term = term * x / k;
    result += term;
  }
  for (int i = 0; i < s; ++i) result = result * result;
  return result;
}

inline Matrix matrix_power(const Matrix& m, int k) {
  Matrix out = Matrix::Identity(m.rows(), m.cols());
  for (int i = 0; i < k; ++i) out = out * m;
  return out;
}

/// Central differences of f at x.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x,
                          double h = 1e-6) {
  const Vector f0 = f(x);
  Matrix j(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vector a = x, b = x;
    a(k) += h;
    b(k) -= h;
    j.col(k) = (f(a) - f(b)) / (2.0 * h);
  }
  return j;
}

/// Minimizes (||S V||^2 + ||A V||^2) / ||R V||^2 by random restarts and
/// normalized gradient descent with backtracking.
inline double brute_force_rho(const Matrix& s, const Matrix& r, const Matrix& a,
                              unsigned seed = 1, int restarts = 300) {
  const Matrix num = s.transpose() * s + a.transpose() * a;
  const Matrix den = r.transpose() * r;
  const auto q = [&](const Vector& v) {
    const double d = v.dot(den * v);
    return d > 0 ? v.dot(num * v) / d : INFINITY;
  };
  std::mt19937 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double best = INFINITY;
  for (int rs = 0; rs < restarts; ++rs) {
    Vector v(s.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
    v.normalize();
    double val = q(v);
    double step = 0.1;
    for (int it = 0; it < 2000 && step > 1e-14; ++it) {
      const double d = v.dot(den * v);
      const Vector grad = 2.0 * (num * v - val * (den * v)) / d;
      Vector cand = (v - step * grad).normalized();
      const double cv = q(cand);
      if (cv < val) {
        v = cand;
        val = cv;
        step *= 1.5;
      } else {
        step *= 0.5;
      }
    }
    best = std::min(best, val);
  }
  return best;
}

}  // namespace oracle
