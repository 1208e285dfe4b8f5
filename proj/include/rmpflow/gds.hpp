#pragma once

#include <string>

#include "rmpflow/rmp.hpp"

namespace rmpflow {

using MetricFn = std::function<Matrix(const Vector&, const Vector&)>;

/// Metric / damping / potential bundle defining a geometric dynamical system
///   (G + Xi_G) xddot + xi_G = -grad Phi - B xdot
/// on the leaf space. Analytic curvature closures are optional; absent ones
/// fall back to central differences on the metric.
struct GdsLeaf {
  int dim = 0;
  MetricFn metric;
  MetricFn damping;
  std::function<Vector(const Vector&)> potential_grad;
  /// Optional; required only by the Lyapunov diagnostics.
  std::function<double(const Vector&)> potential_value;
  MetricFn curvature_Xi_fn;
  std::function<Vector(const Vector&, const Vector&)> curvature_xi_fn;
  /// Metric ignores xdot; Xi vanishes identically.
  bool velocity_free_metric = false;
  /// Baselines that deliberately drop Xi and xi (potential-field variants).
  bool drop_curvature = false;
  /// Full override of the natural form (joint-limit leaf), bypassing the
  /// standard GDS assembly. Receives (x, xdot, with_curvature).
  std::function<NaturalRmp(const Vector&, const Vector&, bool)> natural_override;
  std::string label;
};

/// Curvature pair (Xi_G, xi_G) of a metric at one state.
struct CurvaturePair {
  Matrix Xi;
  Vector xi;
};

namespace detail {

/// Central difference of the metric in one coordinate of `arg` (position when
/// wrt_position, velocity otherwise); order 4 selects the five-point stencil.
inline Matrix metric_partial(const MetricFn& metric, const Vector& x, const Vector& xdot,
                             bool wrt_position, int j, double h, int order) {
  Vector xp = x, vp = xdot;
  Vector& arg = wrt_position ? xp : vp;
  const double a0 = arg(j);
  auto eval = [&](double delta) {
    arg(j) = a0 + delta;
    Matrix g = metric(xp, vp);
    arg(j) = a0;
    return g;
  };
  if (order == 4)
    return (8.0 * (eval(h) - eval(-h)) - (eval(2.0 * h) - eval(-2.0 * h))) / (12.0 * h);
  return (eval(h) - eval(-h)) / (2.0 * h);
}

}  // namespace detail

/// Xi_G(x, xdot) = 1/2 sum_i xdot_i d/dxdot g_i, via central differences of
/// the metric in the velocity argument.
inline Matrix curvature_Xi(const MetricFn& metric, const Vector& x, const Vector& xdot,
                           double h = kFdStep, int order = 2) {
  const int n = static_cast<int>(x.size());
  Matrix Xi = Matrix::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    // Column j of Xi: 1/2 (dG/dxdot_j) xdot.
    Xi.col(j) = 0.5 * detail::metric_partial(metric, x, xdot, false, j, h, order) * xdot;
  }
  return Xi;
}

/// xi_G(x, xdot) = Gdot_x xdot - 1/2 grad_x (xdot^T G xdot), with
/// Gdot_x = [d/dx g_i xdot]_i, via central differences in the position.
inline Vector curvature_xi(const MetricFn& metric, const Vector& x, const Vector& xdot,
                           double h = kFdStep, int order = 2) {
  const int n = static_cast<int>(x.size());
  Vector xi = Vector::Zero(n);
  for (int j = 0; j < n; ++j) {
    const Matrix dG = detail::metric_partial(metric, x, xdot, true, j, h, order);
    xi += xdot(j) * (dG * xdot);
    xi(j) -= 0.5 * xdot.dot(dG * xdot);
  }
  return xi;
}

/// Leaf curvature with the analytic closures when present.
inline CurvaturePair leaf_curvature(const GdsLeaf& leaf, const Vector& x, const Vector& xdot) {
  CurvaturePair out;
  if (leaf.velocity_free_metric)
    out.Xi = Matrix::Zero(leaf.dim, leaf.dim);
  else
    out.Xi = leaf.curvature_Xi_fn ? leaf.curvature_Xi_fn(x, xdot)
                                  : curvature_Xi(leaf.metric, x, xdot);
  out.xi = leaf.curvature_xi_fn ? leaf.curvature_xi_fn(x, xdot)
                                : curvature_xi(leaf.metric, x, xdot);
  return out;
}

/// Natural-form evaluation of a GDS leaf:
///   f = -xi_G - grad Phi - B xdot,  M = G + Xi_G.
/// with_curvature=false zeroes Xi and xi (ablation studies and PF baselines).
inline NaturalRmp gds_natural_rmp(const GdsLeaf& leaf, const Vector& x, const Vector& xdot,
                                  bool with_curvature = true) {
  const bool curved = with_curvature && !leaf.drop_curvature;
  if (leaf.natural_override) return leaf.natural_override(x, xdot, curved);

  NaturalRmp out;
  const Matrix G = leaf.metric(x, xdot);
  out.M = G;
  out.f = -leaf.damping(x, xdot) * xdot;
  if (leaf.potential_grad) out.f -= leaf.potential_grad(x);
  if (curved) {
    const CurvaturePair c = leaf_curvature(leaf, x, xdot);
    out.M += c.Xi;
    out.f -= c.xi;
  }
  return out;
}

/// Coriolis matrix C with C_ij = sum_k xdot_k Gamma_ijk, where Gamma_ijk is
/// the Christoffel symbol of the first kind of the (velocity-independent)
/// metric. Verification oracle for xi_G = C xdot.
inline Matrix coriolis_matrix(const MetricFn& metric, const Vector& x, const Vector& xdot,
                              double h = kFdStep) {
  const int n = static_cast<int>(x.size());
  std::vector<Matrix> dG(n);
  Vector xp = x;
  for (int k = 0; k < n; ++k) {
    const double xk = x(k);
    xp(k) = xk + h;
    const Matrix gp = metric(xp, xdot);
    xp(k) = xk - h;
    const Matrix gm = metric(xp, xdot);
    xp(k) = xk;
    dG[k] = (gp - gm) / (2.0 * h);
  }
  Matrix C = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        C(i, j) += 0.5 * xdot(k) * (dG[k](i, j) + dG[j](i, k) - dG[i](j, k));
  return C;
}

}  // namespace rmpflow
