#pragma once

#include <algorithm>
#include <cmath>

#include "rmpflow/gds.hpp"

namespace rmpflow {

// ---------------------------------------------------------------------------
// Barrier collision avoidance on a 1-D distance space.
// ---------------------------------------------------------------------------

struct CollisionParams {
  double r_w = 1.0;       // nominal radius of action (m)
  double sigma = 0.5;     // velocity-gate width (m/s)
  double alpha = 1e-3;    // repulsion potential gain
  double eta_damp = 0.0;  // constant damping coefficient b
  double epsilon = 0.0;   // metric floor added to the velocity gate
  double s_min = 1e-6;    // distance floor guarding the 1/s pole

  void validate() const {
    if (r_w <= 0.0) throw std::invalid_argument("CollisionParams: r_w must be positive");
    if (sigma <= 0.0) throw std::invalid_argument("CollisionParams: sigma must be positive");
    if (alpha < 0.0 || eta_damp < 0.0 || epsilon < 0.0)
      throw std::invalid_argument("CollisionParams: gains must be nonnegative");
  }
};

/// w(s) = (r_w - s)_+^2 / s, clamped below s_min. w(r_w) = 0 and w grows as
/// the obstacle gets close.
inline double collision_w(double s, double r_w, double s_min = 1e-6) {
  s = std::max(s, s_min);
  if (s >= r_w) return 0.0;
  const double t = r_w - s;
  return t * t / s;
}

/// dw/ds = 1 - r_w^2/s^2 on (0, r_w), zero beyond the radius of action.
inline double collision_w_prime(double s, double r_w, double s_min = 1e-6) {
  s = std::max(s, s_min);
  if (s >= r_w) return 0.0;
  return 1.0 - (r_w * r_w) / (s * s);
}

/// u(sdot) = 1 - exp(-sdot^2 / 2 sigma^2) for sdot < 0, and 0 otherwise:
/// the gate opens only while approaching.
inline double collision_u(double sdot, double sigma) {
  if (sdot >= 0.0) return 0.0;
  return 1.0 - std::exp(-sdot * sdot / (2.0 * sigma * sigma));
}

/// du/dsdot = (sdot / sigma^2) exp(-sdot^2 / 2 sigma^2) for sdot < 0, else 0.
inline double collision_u_prime(double sdot, double sigma) {
  if (sdot >= 0.0) return 0.0;
  return (sdot / (sigma * sigma)) * std::exp(-sdot * sdot / (2.0 * sigma * sigma));
}

/// 1-D GDS on the distance space with metric g = w(s) (epsilon + u(sdot)),
/// potential Phi = 1/2 alpha w(s)^2 and constant damping. Curvature terms in
/// closed form: Xi = 1/2 sdot w du/dsdot, xi = 1/2 (eps+u) dw/ds sdot^2.
inline GdsLeaf collision_leaf(const CollisionParams& p) {
  p.validate();
  GdsLeaf leaf;
  leaf.dim = 1;
  leaf.label = "collision";
  leaf.metric = [p](const Vector& x, const Vector& xd) {
    const double g = collision_w(x(0), p.r_w, p.s_min) * (p.epsilon + collision_u(xd(0), p.sigma));
    return Matrix(Matrix::Constant(1, 1, g));
  };
  leaf.damping = [p](const Vector&, const Vector&) {
    return Matrix(Matrix::Constant(1, 1, p.eta_damp));
  };
  leaf.potential_grad = [p](const Vector& x) {
    const double w = collision_w(x(0), p.r_w, p.s_min);
    return Vector(Vector::Constant(1, p.alpha * w * collision_w_prime(x(0), p.r_w, p.s_min)));
  };
  leaf.potential_value = [p](const Vector& x) {
    const double w = collision_w(x(0), p.r_w, p.s_min);
    return 0.5 * p.alpha * w * w;
  };
  leaf.curvature_Xi_fn = [p](const Vector& x, const Vector& xd) {
    const double Xi = 0.5 * xd(0) * collision_w(x(0), p.r_w, p.s_min) *
                      collision_u_prime(xd(0), p.sigma);
    return Matrix(Matrix::Constant(1, 1, Xi));
  };
  leaf.curvature_xi_fn = [p](const Vector& x, const Vector& xd) {
    const double xi = 0.5 * (p.epsilon + collision_u(xd(0), p.sigma)) *
                      collision_w_prime(x(0), p.r_w, p.s_min) * xd(0) * xd(0);
    return Vector(Vector::Constant(1, xi));
  };
  return leaf;
}

/// The 2D-experiment collision metric: w(x) = 1/x^4 and
/// u(xdot) = epsilon + min(0, xdot) xdot, same potential shape as above.
struct InvQuarticParams {
  double alpha = 0.0;
  double eta_damp = 0.0;
  double epsilon = 1e-6;
  double s_min = 1e-6;
};

inline GdsLeaf inv_quartic_collision_leaf(const InvQuarticParams& p) {
  if (p.alpha < 0.0 || p.eta_damp < 0.0 || p.epsilon < 0.0)
    throw std::invalid_argument("InvQuarticParams: gains must be nonnegative");
  auto w = [p](double s) {
    s = std::max(s, p.s_min);
    return 1.0 / (s * s * s * s);
  };
  auto w_prime = [p](double s) {
    if (s < p.s_min) return 0.0;  // flat beyond the clamp
    return -4.0 / (s * s * s * s * s);
  };
  auto u = [p](double sd) { return p.epsilon + std::min(0.0, sd) * sd; };
  auto u_prime = [](double sd) { return sd < 0.0 ? 2.0 * sd : 0.0; };

  GdsLeaf leaf;
  leaf.dim = 1;
  leaf.label = "collision_quartic";
  leaf.metric = [w, u](const Vector& x, const Vector& xd) {
    return Matrix(Matrix::Constant(1, 1, w(x(0)) * u(xd(0))));
  };
  leaf.damping = [p](const Vector&, const Vector&) {
    return Matrix(Matrix::Constant(1, 1, p.eta_damp));
  };
  leaf.potential_grad = [p, w, w_prime](const Vector& x) {
    return Vector(Vector::Constant(1, p.alpha * w(x(0)) * w_prime(x(0))));
  };
  leaf.potential_value = [p, w](const Vector& x) {
    const double wx = w(x(0));
    return 0.5 * p.alpha * wx * wx;
  };
  leaf.curvature_Xi_fn = [w, u_prime](const Vector& x, const Vector& xd) {
    return Matrix(Matrix::Constant(1, 1, 0.5 * xd(0) * w(x(0)) * u_prime(xd(0))));
  };
  leaf.curvature_xi_fn = [u, w_prime](const Vector& x, const Vector& xd) {
    return Vector(Vector::Constant(1, 0.5 * u(xd(0)) * w_prime(x(0)) * xd(0) * xd(0)));
  };
  return leaf;
}

// ---------------------------------------------------------------------------
// Attractors (goal at the origin of the leaf space).
// ---------------------------------------------------------------------------

enum class AttractorMetricKind { kUniform, kStretch };

struct AttractorParams {
  double eta_softmax = 10.0;  // smoothing of the softmax potential
  double w_u = 10.0;          // metric weight near the goal
  double w_l = 1.0;           // metric weight far away
  double sigma_gamma = 1.0;   // weight length-scale
  double sigma_alpha = 1.0;   // stretch length-scale
  double eps_stretch = 1e-2;  // baseline Euclidean term of the stretch metric
  double damp = 1.0;          // damping gain eta_B
  AttractorMetricKind metric_kind = AttractorMetricKind::kUniform;
  /// Use the soft-normalization gradient field instead of the softmax
  /// potential; no closed-form potential value is available then.
  bool softnorm_gradient = false;

  void validate() const {
    if (eta_softmax <= 0.0) throw std::invalid_argument("AttractorParams: eta_softmax > 0");
    if (w_l < 0.0 || w_u < w_l) throw std::invalid_argument("AttractorParams: need 0 <= w_l <= w_u");
    if (sigma_gamma <= 0.0 || sigma_alpha <= 0.0)
      throw std::invalid_argument("AttractorParams: length scales must be positive");
    if (eps_stretch <= 0.0) throw std::invalid_argument("AttractorParams: eps_stretch > 0");
    if (damp < 0.0) throw std::invalid_argument("AttractorParams: damp >= 0");
  }
};

/// Soft normalization theta_alpha(v) = v / h(|v|) with
/// h(gamma) = gamma + (1/alpha) log(1 + exp(-2 alpha gamma)); smooth at zero,
/// |theta| < 1 everywhere.
inline Vector soft_normalize(const Vector& v, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("soft_normalize: alpha must be positive");
  const double gamma = v.norm();
  const double h = gamma + std::log1p(std::exp(-2.0 * alpha * gamma)) / alpha;
  return v / h;
}

/// Radial slope of the softmax potential: s_eta(r) = tanh(eta r).
inline double softmax_slope(double r, double eta) {
  const double e = std::exp(-2.0 * eta * r);
  return (1.0 - e) / (1.0 + e);
}

/// Gradient of Phi~(x) = |x| + (1/eta) log(1 + exp(-2 eta |x|)):
/// tanh(eta |x|) x_hat, zero at the origin.
inline Vector attractor_potential_grad(const Vector& x, double eta_softmax) {
  if (eta_softmax <= 0.0)
    throw std::invalid_argument("attractor_potential_grad: eta must be positive");
  const double r = x.norm();
  if (r == 0.0) return Vector::Zero(x.size());
  return softmax_slope(r, eta_softmax) * (x / r);
}

/// Softmax potential shifted to zero at the origin.
inline double attractor_potential_value(const Vector& x, double eta_softmax) {
  const double r = x.norm();
  return r + (std::log1p(std::exp(-2.0 * eta_softmax * r)) - std::log(2.0)) / eta_softmax;
}

inline double attractor_weight(double r, const AttractorParams& p) {
  const double gamma = std::exp(-r * r / (2.0 * p.sigma_gamma * p.sigma_gamma));
  return (p.w_u - p.w_l) * gamma + p.w_l;
}

/// Metric options of the attractor: M_uni = w(x) I, or the stretch metric
/// w(x) ((1-alpha) grad grad^T + (alpha+eps) I) that prioritizes the goal
/// direction away from the target.
inline Matrix attractor_metric(const Vector& x, const AttractorParams& p) {
  p.validate();
  const int n = static_cast<int>(x.size());
  const double r = x.norm();
  const double w = attractor_weight(r, p);
  if (p.metric_kind == AttractorMetricKind::kUniform) return w * Matrix::Identity(n, n);
  const double a = std::exp(-r * r / (2.0 * p.sigma_alpha * p.sigma_alpha));
  const Vector g = p.softnorm_gradient ? soft_normalize(x, p.eta_softmax)
                                       : attractor_potential_grad(x, p.eta_softmax);
  return w * ((1.0 - a) * (g * g.transpose()) + (a + p.eps_stretch) * Matrix::Identity(n, n));
}

namespace detail {

/// Composite-Simpson integral of a smooth radial profile on [0, r].
inline double radial_integral(const std::function<double(double)>& f, double r,
                              int min_panels = 256) {
  if (r <= 0.0) return 0.0;
  int n = std::max(min_panels, static_cast<int>(r * 64.0));
  n += n % 2;  // Simpson needs an even panel count
  const double h = r / n;
  double acc = f(0.0) + f(r);
  for (int i = 1; i < n; ++i) acc += f(i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

/// Radial slope kappa(r) of the chosen attractor gradient field.
inline double attractor_kappa(double r, const AttractorParams& p) {
  if (!p.softnorm_gradient) return softmax_slope(r, p.eta_softmax);
  const double h = r + std::log1p(std::exp(-2.0 * p.eta_softmax * r)) / p.eta_softmax;
  return r / h;
}

/// Radial slope of M(x) grad Phi~(x); both metric kinds keep the field radial.
inline double attractor_force_slope(double r, const AttractorParams& p) {
  const double kappa = attractor_kappa(r, p);
  const double w = attractor_weight(r, p);
  if (p.metric_kind == AttractorMetricKind::kUniform) return w * kappa;
  const double a = std::exp(-r * r / (2.0 * p.sigma_alpha * p.sigma_alpha));
  return w * ((1.0 - a) * kappa * kappa + a + p.eps_stretch) * kappa;
}

}  // namespace detail

/// GDS attractor: metric per attractor_metric, damping eta_B M(x), and the
/// compatibility potential with grad Phi = M(x) grad Phi~(x), so the motion
/// policy reads xddot = -grad Phi~ - eta_B xdot - M^{-1} xi_M. The uniform
/// kind carries the analytic Householder-form curvature.
inline GdsLeaf attractor_leaf(int dim, const AttractorParams& p) {
  p.validate();
  GdsLeaf leaf;
  leaf.dim = dim;
  leaf.label = "attractor";
  leaf.velocity_free_metric = true;
  leaf.metric = [p](const Vector& x, const Vector&) { return attractor_metric(x, p); };
  leaf.damping = [p](const Vector& x, const Vector&) {
    return Matrix(p.damp * attractor_metric(x, p));
  };
  leaf.potential_grad = [p](const Vector& x) {
    const double r = x.norm();
    if (r == 0.0) return Vector(Vector::Zero(x.size()));
    return Vector(detail::attractor_force_slope(r, p) * (x / r));
  };
  if (!p.softnorm_gradient) {
    leaf.potential_value = [p](const Vector& x) {
      return detail::radial_integral(
          [&p](double rho) { return detail::attractor_force_slope(rho, p); }, x.norm());
    };
  }
  if (p.metric_kind == AttractorMetricKind::kUniform) {
    leaf.curvature_xi_fn = [p](const Vector& x, const Vector& xd) {
      // xi_M = (xdot^T grad w) xdot - 1/2 |xdot|^2 grad w for M = w(x) I.
      const double r = x.norm();
      const double gamma = std::exp(-r * r / (2.0 * p.sigma_gamma * p.sigma_gamma));
      const Vector grad_w = -((p.w_u - p.w_l) * gamma / (p.sigma_gamma * p.sigma_gamma)) * x;
      return Vector(xd.dot(grad_w) * xd - 0.5 * xd.squaredNorm() * grad_w);
    };
  }
  return leaf;
}

// ---------------------------------------------------------------------------
// Velocity-gated joint limits on the configuration space.
// ---------------------------------------------------------------------------

struct JointLimitParams {
  Vector lower;          // l_l per joint (rad)
  Vector upper;          // l_u per joint
  Vector rest_posture;   // q0
  double sigma = 0.1;    // velocity-gate width
  double lambda = 0.25;  // metric scale
  double eta_p = 1.0;    // attractor gain toward q0
  double eta_d = 2.0;    // damper gain

  void validate() const {
    if (lower.size() != upper.size() || lower.size() != rest_posture.size())
      throw std::invalid_argument("JointLimitParams: dimension mismatch");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      if (!(lower(i) < upper(i)))
        throw std::invalid_argument("JointLimitParams: need l_l < l_u per joint");
    if (sigma <= 0.0 || lambda <= 0.0)
      throw std::invalid_argument("JointLimitParams: sigma and lambda must be positive");
    if (eta_p < 0.0 || eta_d < 0.0)
      throw std::invalid_argument("JointLimitParams: gains must be nonnegative");
  }
};

struct JointLimitDiag {
  Vector a;         // diagonal of the metric A
  Vector xi_a;      // curvature force diag(1/2 dA_ii/dq_i qdot_i^2)
  Vector da_dqdot;  // velocity sensitivity dA_ii/dqdot_i (>= 0 times qdot)
};

/// Per-joint metric a = lambda b^-2 with the smoothed barrier
/// b = s (alpha_u d + 1 - alpha_u) + (1-s) (alpha_l d + 1 - alpha_l),
/// s the normalized joint position, d = 4s(1-s), and Gaussian velocity gates.
/// a -> infinity approaching a limit while moving toward it.
inline JointLimitDiag jointlimit_diag(const Vector& q, const Vector& qdot,
                                      const JointLimitParams& p) {
  p.validate();
  const Eigen::Index n = q.size();
  if (n != p.lower.size() || qdot.size() != n)
    throw std::invalid_argument("jointlimit_diag: dimension mismatch");
  JointLimitDiag out{Vector(n), Vector(n), Vector(n)};
  const double sig2 = p.sigma * p.sigma;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double range = p.upper(i) - p.lower(i);
    const double s = (q(i) - p.lower(i)) / range;
    if (s <= 0.0 || s >= 1.0)
      throw std::domain_error("jointlimit_diag: joint " + std::to_string(i) +
                              " at or outside its limits");
    const double d = 4.0 * s * (1.0 - s);
    const double dd_ds = 4.0 - 8.0 * s;
    const double qd = qdot(i);
    const double qd_pos = std::max(qd, 0.0);
    const double qd_neg = std::min(qd, 0.0);
    const double au = 1.0 - std::exp(-qd_pos * qd_pos / (2.0 * sig2));
    const double al = 1.0 - std::exp(-qd_neg * qd_neg / (2.0 * sig2));
    const double b = s * (au * d + (1.0 - au)) + (1.0 - s) * (al * d + (1.0 - al));
    const double db_ds =
        (au * d + (1.0 - au)) - (al * d + (1.0 - al)) + (s * au + (1.0 - s) * al) * dd_ds;
    const double db_dq = db_ds / range;
    const double a = p.lambda / (b * b);
    const double da_dq = -2.0 * p.lambda / (b * b * b) * db_dq;
    // Gate derivatives: only the active side contributes.
    const double dau = qd > 0.0 ? (qd / sig2) * std::exp(-qd * qd / (2.0 * sig2)) : 0.0;
    const double dal = qd < 0.0 ? (qd / sig2) * std::exp(-qd * qd / (2.0 * sig2)) : 0.0;
    const double db_dqd = s * (d - 1.0) * dau + (1.0 - s) * (d - 1.0) * dal;
    out.a(i) = a;
    out.xi_a(i) = 0.5 * da_dq * qd * qd;
    out.da_dqdot(i) = -2.0 * p.lambda / (b * b * b) * db_dqd;
  }
  return out;
}

/// Joint-limit RMP [A qddot_l^d, A] with
/// qddot_l^d = eta_p (q0 - q) - eta_d qdot - A^{-1} xi_A; lives on the
/// configuration space behind an identity task map.
inline GdsLeaf jointlimit_leaf(const JointLimitParams& p) {
  p.validate();
  const int n = static_cast<int>(p.lower.size());
  GdsLeaf leaf;
  leaf.dim = n;
  leaf.label = "joint_limit";
  leaf.metric = [p](const Vector& q, const Vector& qd) {
    return Matrix(jointlimit_diag(q, qd, p).a.asDiagonal());
  };
  leaf.damping = [p](const Vector& q, const Vector& qd) {
    return Matrix(p.eta_d * Matrix(jointlimit_diag(q, qd, p).a.asDiagonal()));
  };
  leaf.curvature_Xi_fn = [p](const Vector& q, const Vector& qd) {
    // Xi_ii = 1/2 qdot_i dA_ii/dqdot_i, nonnegative by the gate construction.
    const JointLimitDiag d = jointlimit_diag(q, qd, p);
    return Matrix(Vector(0.5 * qd.cwiseProduct(d.da_dqdot)).asDiagonal());
  };
  leaf.curvature_xi_fn = [p](const Vector& q, const Vector& qd) {
    return jointlimit_diag(q, qd, p).xi_a;
  };
  leaf.potential_grad = [p](const Vector& q) {
    // Metric-shaped restoring force toward the rest posture (diagnostic use;
    // evaluated at qdot = 0 where the gates are closed).
    const JointLimitDiag d = jointlimit_diag(q, Vector::Zero(q.size()), p);
    return Vector(p.eta_p * d.a.asDiagonal() * (q - p.rest_posture));
  };
  leaf.natural_override = [p](const Vector& q, const Vector& qd, bool with_curvature) {
    const JointLimitDiag d = jointlimit_diag(q, qd, p);
    NaturalRmp out;
    out.M = d.a.asDiagonal();
    out.f = d.a.cwiseProduct(p.eta_p * (p.rest_posture - q) - p.eta_d * qd);
    if (with_curvature) out.f -= d.xi_a;
    return out;
  };
  return leaf;
}

// ---------------------------------------------------------------------------
// Constant configuration-space damper.
// ---------------------------------------------------------------------------

/// G = lambda_m I, B = c I, Phi = 0; keeps the root damping strictly
/// positive definite.
inline GdsLeaf cspace_damper_leaf(int dim, double lambda_m, double c) {
  if (lambda_m < 0.0) throw std::invalid_argument("cspace_damper_leaf: lambda_m >= 0");
  if (c <= 0.0) throw std::invalid_argument("cspace_damper_leaf: c > 0");
  GdsLeaf leaf;
  leaf.dim = dim;
  leaf.label = "cspace_damper";
  leaf.velocity_free_metric = true;
  leaf.metric = [dim, lambda_m](const Vector&, const Vector&) {
    return Matrix(lambda_m * Matrix::Identity(dim, dim));
  };
  leaf.damping = [dim, c](const Vector&, const Vector&) {
    return Matrix(c * Matrix::Identity(dim, dim));
  };
  leaf.potential_grad = [dim](const Vector&) { return Vector(Vector::Zero(dim)); };
  leaf.potential_value = [](const Vector&) { return 0.0; };
  leaf.curvature_xi_fn = [dim](const Vector&, const Vector&) {
    return Vector(Vector::Zero(dim));
  };
  return leaf;
}

}  // namespace rmpflow
