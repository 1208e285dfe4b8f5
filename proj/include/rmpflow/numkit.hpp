#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>

namespace rmpflow {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline bool is_finite(const Matrix& m) { return m.allFinite(); }
inline bool is_finite(const Vector& v) { return v.allFinite(); }

/// Relative singular-value cutoff separating genuine rank deficiency
/// (e.g. rank-1 pulled-back metrics) from round-off.
inline constexpr double kPinvRtol = 1e-10;

/// Default step for the central-difference oracles.
inline constexpr double kFdStep = 1e-5;

/// Minimum-norm least-squares solve a = M^+ f via SVD with singular values
/// below rtol * sigma_max truncated to zero. M must be square; for a
/// nonsingular M this equals M^-1 f.
inline Vector pseudo_inverse_apply(const Matrix& M, const Vector& f,
                                   double rtol = kPinvRtol) {
  if (M.rows() != M.cols())
    throw std::invalid_argument("pseudo_inverse_apply: matrix must be square, got " +
                                std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
  if (M.cols() != f.size())
    throw std::invalid_argument("pseudo_inverse_apply: dimension mismatch");
  if (!is_finite(M) || !is_finite(f))
    throw std::invalid_argument("pseudo_inverse_apply: non-finite input");

  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? rtol * sv(0) : 0.0;
  Vector inv_sv(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    inv_sv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
  return svd.matrixV() * (inv_sv.asDiagonal() * (svd.matrixU().transpose() * f));
}

/// Moore-Penrose pseudo-inverse with the same truncation rule.
inline Matrix pseudo_inverse(const Matrix& M, double rtol = kPinvRtol) {
  if (!is_finite(M)) throw std::invalid_argument("pseudo_inverse: non-finite input");
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? rtol * sv(0) : 0.0;
  Vector inv_sv(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    inv_sv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
  return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

using ScalarField = std::function<double(const Vector&)>;
using VectorField = std::function<Vector(const Vector&)>;

/// Central-difference gradient, O(h^2). order=4 switches to the five-point
/// stencil (O(h^4)), used where the checks need errors well below 1e-8.
inline Vector finite_diff_grad(const ScalarField& field, const Vector& x,
                               double h = kFdStep, int order = 2) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: step must be positive");
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    if (order == 4) {
      xp(i) = xi + h;       const double f1 = field(xp);
      xp(i) = xi - h;       const double f2 = field(xp);
      xp(i) = xi + 2 * h;   const double f3 = field(xp);
      xp(i) = xi - 2 * h;   const double f4 = field(xp);
      g(i) = (8.0 * (f1 - f2) - (f3 - f4)) / (12.0 * h);
    } else {
      xp(i) = xi + h;       const double f1 = field(xp);
      xp(i) = xi - h;       const double f2 = field(xp);
      g(i) = (f1 - f2) / (2.0 * h);
    }
    xp(i) = xi;
  }
  return g;
}

/// Central-difference Jacobian of a vector-valued map, O(h^2) (order=4 for O(h^4)).
inline Matrix finite_diff_jacobian(const VectorField& map, const Vector& x,
                                   double h = kFdStep, int order = 2) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_jacobian: step must be positive");
  Matrix J;
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    Vector col;
    if (order == 4) {
      xp(i) = xi + h;       const Vector f1 = map(xp);
      xp(i) = xi - h;       const Vector f2 = map(xp);
      xp(i) = xi + 2 * h;   const Vector f3 = map(xp);
      xp(i) = xi - 2 * h;   const Vector f4 = map(xp);
      col = (8.0 * (f1 - f2) - (f3 - f4)) / (12.0 * h);
    } else {
      xp(i) = xi + h;       const Vector f1 = map(xp);
      xp(i) = xi - h;       const Vector f2 = map(xp);
      col = (f1 - f2) / (2.0 * h);
    }
    xp(i) = xi;
    if (J.size() == 0) J.resize(col.size(), x.size());
    J.col(i) = col;
  }
  return J;
}

/// Extreme eigenvalues of the symmetrized matrix (A + A^T)/2.
inline double min_eigenvalue_sym(const Matrix& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (A + A.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue_sym(const Matrix& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (A + A.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

/// Symmetric PSD square root; negative round-off eigenvalues are clamped.
inline Matrix sqrt_psd(const Matrix& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (A + A.transpose()));
  Vector ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = ev(i) > 0.0 ? std::sqrt(ev(i)) : 0.0;
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace rmpflow
