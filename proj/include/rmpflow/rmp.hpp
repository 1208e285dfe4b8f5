#pragma once

#include <vector>

#include "rmpflow/numkit.hpp"

namespace rmpflow {

/// Natural form [f, M]: desired force paired with the inertia matrix.
struct NaturalRmp {
  Vector f;
  Matrix M;

  int dim() const { return static_cast<int>(f.size()); }

  NaturalRmp& operator+=(const NaturalRmp& other) {
    f += other.f;
    M += other.M;
    return *this;
  }
};

inline NaturalRmp zero_rmp(int dim) {
  return {Vector::Zero(dim), Matrix::Zero(dim, dim)};
}

/// Canonical form (a, M): desired acceleration plus the inertia matrix.
struct CanonicalRmp {
  Vector a;
  Matrix M;
};

/// One child's contribution to pullback: its natural RMP together with the
/// edge Jacobian and curvature vector evaluated at the parent state.
struct ChildPull {
  NaturalRmp rmp;
  Matrix J;
  Vector jdotxdot;
};

/// f = sum_i J_i^T (f_i - M_i Jdot_i xdot),  M = sum_i J_i^T M_i J_i.
/// No inversion happens here; only the root resolve inverts.
inline NaturalRmp pullback(const std::vector<ChildPull>& children, int parent_dim) {
  NaturalRmp out = zero_rmp(parent_dim);
  for (const auto& c : children) {
    if (c.J.cols() != parent_dim || c.J.rows() != c.rmp.dim() ||
        c.jdotxdot.size() != c.rmp.dim())
      throw std::invalid_argument("pullback: child dimensions inconsistent with parent");
    out.f += c.J.transpose() * (c.rmp.f - c.rmp.M * c.jdotxdot);
    out.M += c.J.transpose() * c.rmp.M * c.J;
  }
  return out;
}

/// Natural -> canonical: a = M^+ f with the Moore-Penrose pseudo-inverse,
/// minimum-norm when M is rank deficient.
inline CanonicalRmp resolve(const NaturalRmp& rmp) {
  return {pseudo_inverse_apply(rmp.M, rmp.f), rmp.M};
}

struct ChildCanonical {
  CanonicalRmp rmp;
  Matrix J;
  Vector jdotxdot;
};

/// Reference solution of the metric-weighted least-squares combination
///   argmin_a 1/2 sum_i | J_i a + Jdot_i xdot - a_i |^2_{M_i}
/// computed through the stacked system M_i^{1/2} J_i a ~ M_i^{1/2} (a_i -
/// Jdot_i xdot) and an SVD least-squares solve. Used only by verification;
/// the production path is resolve(pullback(...)).
inline Vector least_squares_reference(const std::vector<ChildCanonical>& children,
                                      int parent_dim) {
  Eigen::Index rows = 0;
  for (const auto& c : children) rows += c.rmp.a.size();
  Matrix A(rows, parent_dim);
  Vector b(rows);
  Eigen::Index at = 0;
  for (const auto& c : children) {
    if (c.J.cols() != parent_dim)
      throw std::invalid_argument("least_squares_reference: child Jacobian mismatch");
    const Matrix w = sqrt_psd(c.rmp.M);
    const Eigen::Index m = c.rmp.a.size();
    A.block(at, 0, m, parent_dim) = w * c.J;
    b.segment(at, m) = w * (c.rmp.a - c.jdotxdot);
    at += m;
  }
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(kPinvRtol);
  return svd.solve(b);
}

}  // namespace rmpflow
