#pragma once

#include "tdgeo/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

namespace tdgeo::linalg {

/// Matrix exponential by scaling and squaring with the degree-13 diagonal
/// Pade approximant (Higham 2005). The scaling exponent keeps ||A/2^s||_1
/// below theta_13 so the approximant alone is accurate to unit roundoff.
inline Matrix expm(const Matrix& a) {
  require(a.rows() == a.cols(), ErrorCode::ShapeMismatch, "expm needs a square matrix");
  require(a.allFinite(), ErrorCode::NonFiniteState, "expm input is not finite");
  const Index n = a.rows();
  if (n == 0) return a;

  constexpr std::array<double, 14> b = {
      64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
      1187353796428800.0,  129060195264000.0,   10559470521600.0,
      670442572800.0,      33522128640.0,       1323241920.0,
      40840800.0,          960960.0,            16380.0,
      182.0,               1.0};
  constexpr double theta13 = 5.371920351148152;

  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  int s = 0;
  if (norm1 > theta13) s = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
  const Matrix x = a / std::ldexp(1.0, s);

  const Matrix ident = Matrix::Identity(n, n);
  const Matrix x2 = x * x;
  const Matrix x4 = x2 * x2;
  const Matrix x6 = x4 * x2;
  const Matrix u =
      x * (x6 * (b[13] * x6 + b[11] * x4 + b[9] * x2) + b[7] * x6 + b[5] * x4 + b[3] * x2 +
           b[1] * ident);
  const Matrix v = x6 * (b[12] * x6 + b[10] * x4 + b[8] * x2) + b[6] * x6 + b[4] * x4 +
                   b[2] * x2 + b[0] * ident;
  Matrix r = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < s; ++i) r = r * r;
  return r;
}

inline Matrix symmetric_part(const Matrix& a) { return 0.5 * (a + a.transpose()); }
inline Matrix antisymmetric_part(const Matrix& a) { return 0.5 * (a - a.transpose()); }

inline double lambda_min_symmetric(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double lambda_max_symmetric(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

inline Eigen::VectorXd singular_values(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues();
}

/// Rank with cutoff sigma_i > rel_tol * sigma_max.
inline Index numerical_rank(const Matrix& m, double rel_tol = 1e-10) {
  if (m.size() == 0) return 0;
  const Eigen::VectorXd sv = singular_values(m);
  if (sv(0) == 0.0) return 0;
  return static_cast<Index>((sv.array() > rel_tol * sv(0)).count());
}

inline std::vector<std::complex<double>> eigenvalues(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, false);
  std::vector<std::complex<double>> out(es.eigenvalues().data(),
                                        es.eigenvalues().data() + es.eigenvalues().size());
  return out;
}

struct ComplexEigenpair {
  std::complex<double> value;
  Eigen::VectorXcd vector;
};

/// All eigenpairs of a real matrix with Im(lambda) > tol; one member per
/// conjugate pair, ordered by decreasing |Im| then decreasing Re.
inline std::vector<ComplexEigenpair> complex_eigenpairs(const Matrix& a, double tol = 1e-10) {
  Eigen::EigenSolver<Matrix> es(a, true);
  std::vector<ComplexEigenpair> pairs;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  for (Index i = 0; i < es.eigenvalues().size(); ++i) {
    const auto lam = es.eigenvalues()(i);
    if (lam.imag() > tol * scale) pairs.push_back({lam, es.eigenvectors().col(i)});
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) {
    if (std::abs(x.value.imag()) != std::abs(y.value.imag()))
      return std::abs(x.value.imag()) > std::abs(y.value.imag());
    return x.value.real() > y.value.real();
  });
  return pairs;
}

/// Orthonormal basis of the orthogonal complement of range(m), as columns.
inline Matrix orthogonal_complement(const Matrix& m) {
  const Index n = m.rows();
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU);
  const Index r = numerical_rank(m, 1e-12);
  return svd.matrixU().rightCols(n - r);
}

/// Gram-Schmidt on the columns of a two-column matrix.
inline Matrix orthonormalize(const Matrix& m) {
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
  // Keep orientation: column i of q has positive inner product with column i of m.
  for (Index j = 0; j < q.cols(); ++j)
    if (q.col(j).dot(m.col(j)) < 0) q.col(j) *= -1.0;
  return q;
}

}  // namespace tdgeo::linalg
