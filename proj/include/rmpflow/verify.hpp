#pragma once

#include <cstdio>
#include <cstring>
#include <map>

#include "rmpflow/simlab.hpp"

namespace rmpflow::verify {

struct CheckReport {
  std::string name;
  int samples = 0;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  double tolerance = 0.0;  // bound on the relative error unless noted
  bool passed = true;
  bool skipped = false;
  std::string note;
  struct Failure {
    std::string digest;
    double err = 0.0;
  };
  std::vector<Failure> failures;
};

namespace detail {

inline double rel_err(const Vector& got, const Vector& want) {
  return (got - want).norm() / std::max(1.0, want.norm());
}

/// FNV-1a over the raw bytes of the sample inputs; reproducible identifier
/// for failure reports.
inline std::string digest(const std::vector<double>& values) {
  std::uint64_t h = 1469598103934665603ull;
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::vector<double> flatten(std::initializer_list<const Vector*> vs) {
  std::vector<double> out;
  for (const Vector* v : vs)
    for (Eigen::Index i = 0; i < v->size(); ++i) out.push_back((*v)(i));
  return out;
}

inline void observe(CheckReport& rep, double abs_err, double rel, double tol,
                    const std::vector<double>& inputs) {
  ++rep.samples;
  rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
  rep.max_rel_err = std::max(rep.max_rel_err, rel);
  if (rel >= tol) {
    rep.passed = false;
    if (rep.failures.size() < 16) rep.failures.push_back({digest(inputs), rel});
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Random instances: polynomial/trigonometric maps and GDS leaves.
// ---------------------------------------------------------------------------

/// Smooth map with components a + b^T x + 1/2 x^T C x + d sin(e^T x),
/// carrying analytic Jacobian and curvature vector. Degree <= 3 behavior on
/// the sampled box keeps the finite-difference oracles well conditioned.
inline TaskMap random_smooth_map(Rng& rng, int in_dim, int out_dim) {
  struct Component {
    double a, d;
    Vector b, e;
    Matrix C;
  };
  auto comps = std::make_shared<std::vector<Component>>();
  for (int k = 0; k < out_dim; ++k) {
    Component c;
    c.a = rng.uniform(-0.5, 0.5);
    c.d = rng.uniform(-0.3, 0.3);
    c.b = rng.normal_vector(in_dim, 0.7);
    c.e = rng.normal_vector(in_dim, 0.5);
    Matrix raw(in_dim, in_dim);
    for (int i = 0; i < in_dim; ++i)
      for (int j = 0; j < in_dim; ++j) raw(i, j) = rng.normal();
    c.C = 0.15 * (raw + raw.transpose());
    comps->push_back(std::move(c));
  }
  TaskMap m;
  m.input_dim = in_dim;
  m.output_dim = out_dim;
  m.value = [comps, out_dim](const Vector& x) {
    Vector y(out_dim);
    for (int k = 0; k < out_dim; ++k) {
      const auto& c = (*comps)[k];
      y(k) = c.a + c.b.dot(x) + 0.5 * x.dot(c.C * x) + c.d * std::sin(c.e.dot(x));
    }
    return y;
  };
  m.jacobian = [comps, out_dim, in_dim](const Vector& x) {
    Matrix J(out_dim, in_dim);
    for (int k = 0; k < out_dim; ++k) {
      const auto& c = (*comps)[k];
      J.row(k) = (c.b + c.C * x + c.d * std::cos(c.e.dot(x)) * c.e).transpose();
    }
    return J;
  };
  m.jdot_times_xdot = [comps, out_dim](const Vector& x, const Vector& xd) {
    Vector out(out_dim);
    for (int k = 0; k < out_dim; ++k) {
      const auto& c = (*comps)[k];
      const Matrix H = c.C - c.d * std::sin(c.e.dot(x)) * (c.e * c.e.transpose());
      out(k) = xd.dot(H * xd);
    }
    return out;
  };
  return m;
}

/// Random GDS leaf with smooth PSD metric L(y)^T L(y), constant PSD damping
/// and a quadratic potential. velocity_dependent adds a gated rank-one term
/// with a nonnegative velocity response (the stable-metric family).
inline GdsLeaf random_gds_leaf(Rng& rng, int dim, bool velocity_dependent) {
  Matrix L0(dim, dim), L1(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) {
      L0(i, j) = rng.normal();
      L1(i, j) = 0.3 * rng.normal();
    }
  const Vector freq = rng.uniform_vector(dim, 0.4, 1.2);
  const Matrix B = rng.psd_matrix(dim, 0.2);
  const Matrix Q = rng.psd_matrix(dim, 0.1);
  const Vector b = rng.normal_vector(dim, 0.5);
  const Vector gate_dir = rng.normal_vector(dim, 1.0);
  const double gate_scale = velocity_dependent ? rng.uniform(0.2, 1.0) : 0.0;

  GdsLeaf leaf;
  leaf.dim = dim;
  leaf.label = "random";
  leaf.velocity_free_metric = !velocity_dependent;
  leaf.metric = [L0, L1, freq, gate_dir, gate_scale, dim](const Vector& y, const Vector& yd) {
    Matrix L = L0;
    for (int i = 0; i < dim; ++i) L.col(i) += std::sin(freq(i) * y(i)) * L1.col(i);
    Matrix G = L.transpose() * L;
    if (gate_scale > 0.0) {
      const double v = gate_dir.dot(yd);
      G += gate_scale * (1.0 - std::exp(-v * v)) * (gate_dir * gate_dir.transpose());
    }
    return G;
  };
  leaf.damping = [B](const Vector&, const Vector&) { return B; };
  leaf.potential_grad = [Q, b](const Vector& y) { return Vector(Q * y + b); };
  leaf.potential_value = [Q, b](const Vector& y) { return 0.5 * y.dot(Q * y) + b.dot(y); };
  return leaf;
}

struct RandomTreeSpec {
  int config_dim = 2;
  int max_mid_nodes = 2;
  int max_leaves = 5;
  int max_leaf_dim = 4;
  bool velocity_dependent = false;
};

/// Random two-level RMP-tree: a couple of interior task spaces reached by
/// smooth maps, leaves hanging off them (and possibly off the root).
inline RmpTree make_random_tree(Rng& rng, const RandomTreeSpec& spec) {
  RmpTree tree(spec.config_dim);
  const int n_mid = rng.uniform_int(1, spec.max_mid_nodes);
  std::vector<RmpNode*> attach{&tree.root()};
  for (int i = 0; i < n_mid; ++i) {
    const int mid_dim = rng.uniform_int(1, spec.max_leaf_dim);
    attach.push_back(&tree.root().add_child(
        "mid" + std::to_string(i), random_smooth_map(rng, spec.config_dim, mid_dim)));
  }
  const int n_leaves = rng.uniform_int(1, spec.max_leaves);
  for (int i = 0; i < n_leaves; ++i) {
    RmpNode& host = *attach[rng.uniform_int(0, static_cast<int>(attach.size()) - 1)];
    const int leaf_dim = rng.uniform_int(1, spec.max_leaf_dim);
    host.add_leaf("leaf" + std::to_string(i),
                  random_smooth_map(rng, host.dim(), leaf_dim),
                  random_gds_leaf(rng, leaf_dim, spec.velocity_dependent));
  }
  return tree;
}

// ---------------------------------------------------------------------------
// Closure of the pullback algebra.
// ---------------------------------------------------------------------------

/// Flat evaluation of the pulled-back GDS: G, B, Phi assembled explicitly
/// from the flattened leaves, curvature terms recomputed on the assembled
/// metric with the gds routines. Valid reference when leaf metrics are
/// velocity-free.
inline Vector flat_gds_acceleration(const RmpTree& tree, const Vector& q, const Vector& qdot) {
  const auto leaves = tree.flattened_leaves();
  MetricFn g_flat = [&leaves](const Vector& x, const Vector&) {
    Matrix G = Matrix::Zero(x.size(), x.size());
    for (const auto& [map, leaf] : leaves) {
      const Vector y = map.value(x);
      const Matrix J = map.jacobian(x);
      G += J.transpose() * leaf->metric(y, Vector::Zero(leaf->dim)) * J;
    }
    return G;
  };
  ScalarField phi_flat = [&leaves](const Vector& x) {
    double phi = 0.0;
    for (const auto& [map, leaf] : leaves) phi += leaf->potential_value(map.value(x));
    return phi;
  };
  Matrix B = Matrix::Zero(q.size(), q.size());
  for (const auto& [map, leaf] : leaves) {
    const TaskMapEval ev = taskmap_apply(map, q, qdot);
    B += ev.J.transpose() * leaf->damping(ev.y, ev.ydot) * ev.J;
  }
  const double h = 1e-3;  // fourth-order stencils keep truncation ~1e-12
  const Vector xi = curvature_xi(g_flat, q, qdot, h, 4);
  const Vector grad_phi = finite_diff_grad(phi_flat, q, h, 4);
  const Vector f = -xi - grad_phi - B * qdot;
  return pseudo_inverse_apply(g_flat(q, qdot), f);
}

/// Structured flat evaluation per the eta_{G;S} assembly: leaf curvatures and
/// inertias pulled through the composed maps in one step.
inline Vector structured_flat_acceleration(const RmpTree& tree, const Vector& q,
                                           const Vector& qdot) {
  const auto leaves = tree.flattened_leaves();
  const int d = static_cast<int>(q.size());
  Matrix M = Matrix::Zero(d, d);
  Vector eta = Vector::Zero(d);
  Vector grad_phi = Vector::Zero(d);
  Vector damping_force = Vector::Zero(d);
  for (const auto& [map, leaf] : leaves) {
    const TaskMapEval ev = taskmap_apply(map, q, qdot);
    const CurvaturePair c = leaf_curvature(*leaf, ev.y, ev.ydot);
    const Matrix Mi = leaf->metric(ev.y, ev.ydot) + c.Xi;
    M += ev.J.transpose() * Mi * ev.J;
    eta += ev.J.transpose() * (c.xi + Mi * ev.jdotxdot);
    grad_phi += ev.J.transpose() * leaf->potential_grad(ev.y);
    damping_force += ev.J.transpose() * (leaf->damping(ev.y, ev.ydot) * ev.ydot);
  }
  return pseudo_inverse_apply(M, -eta - grad_phi - damping_force);
}

/// Closure: the two-pass tree evaluation equals the explicitly pulled-back
/// GDS. Strict (1e-8) for velocity-free leaf metrics against the
/// finite-difference flat oracle; 1e-6 against the structured assembly when
/// metrics depend on velocity.
inline CheckReport check_closure(std::uint64_t seed, int n_trees, bool velocity_dependent) {
  CheckReport rep;
  rep.name = velocity_dependent ? "closure_structured" : "closure_velocity_free";
  rep.tolerance = velocity_dependent ? 1e-6 : 1e-8;
  Rng rng(seed);
  RandomTreeSpec spec;
  spec.velocity_dependent = velocity_dependent;
  for (int t = 0; t < n_trees; ++t) {
    spec.config_dim = rng.uniform_int(1, 3);
    RmpTree tree = make_random_tree(rng, spec);
    const Vector q = rng.uniform_vector(spec.config_dim, -1.0, 1.0);
    const Vector qd = rng.uniform_vector(spec.config_dim, -1.0, 1.0);
    const Vector via_tree = tree.evaluate(q, qd).qddot;
    const Vector flat = velocity_dependent ? structured_flat_acceleration(tree, q, qd)
                                           : flat_gds_acceleration(tree, q, qd);
    detail::observe(rep, (via_tree - flat).norm(), detail::rel_err(via_tree, flat),
                    rep.tolerance, detail::flatten({&q, &qd}));
  }
  return rep;
}

/// Identity-map single-leaf sanity case: tree equals the leaf GDS exactly.
inline CheckReport check_closure_identity(std::uint64_t seed) {
  CheckReport rep;
  rep.name = "closure_identity";
  rep.tolerance = 1e-12;
  Rng rng(seed);
  for (int t = 0; t < 20; ++t) {
    const int dim = rng.uniform_int(1, 4);
    GdsLeaf leaf = random_gds_leaf(rng, dim, false);
    RmpTree tree(dim);
    tree.root().add_leaf("leaf", identity_map(dim), leaf);
    const Vector q = rng.uniform_vector(dim, -1.0, 1.0);
    const Vector qd = rng.uniform_vector(dim, -1.0, 1.0);
    const Vector via_tree = tree.evaluate(q, qd).qddot;
    const NaturalRmp direct = gds_natural_rmp(leaf, q, qd);
    const Vector expect = pseudo_inverse_apply(direct.M, direct.f);
    detail::observe(rep, (via_tree - expect).norm(), detail::rel_err(via_tree, expect),
                    rep.tolerance, detail::flatten({&q, &qd}));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Lyapunov rate identity.
// ---------------------------------------------------------------------------

/// Along a recorded trajectory with uniform sample spacing: the centered
/// difference of V matches -qdot^T B qdot within max(1e-6, 10 dt^2), and V
/// never increases by more than 1e-6 per step.
inline CheckReport check_lyapunov(const Trajectory& traj, const RmpTree& tree) {
  CheckReport rep;
  rep.name = "lyapunov_rate";
  if (traj.samples.size() < 3) {
    rep.skipped = true;
    rep.note = "trajectory too short";
    return rep;
  }
  {
    const auto& s0 = traj.samples.front();
    if (!tree.energy(s0.q, s0.qdot).potential_complete) {
      rep.skipped = true;
      rep.note = "skipped: some leaf lacks potential_value";
      return rep;
    }
  }
  const double dt = traj.samples[1].t - traj.samples[0].t;
  rep.tolerance = std::max(1e-6, 10.0 * dt * dt);
  for (std::size_t i = 2; i + 2 < traj.samples.size(); ++i) {
    const auto& cur = traj.samples[i];
    const auto& next = traj.samples[i + 1];
    // Five-point stencil keeps the differencing error far below the O(dt^2)
    // budget even where the barrier metric makes V stiff.
    const double vdot = (8.0 * (next.V - traj.samples[i - 1].V) -
                         (traj.samples[i + 2].V - traj.samples[i - 2].V)) /
                        (12.0 * dt);
    const Matrix B = tree.pulled_back(cur.q, cur.qdot).B;
    const double expected = -cur.qdot.dot(B * cur.qdot);
    const double err = std::abs(vdot - expected);
    detail::observe(rep, err, err, rep.tolerance, detail::flatten({&cur.q, &cur.qdot}));
    if (next.V > cur.V + 1e-6) {
      rep.passed = false;
      if (rep.failures.size() < 16)
        rep.failures.push_back(
            {detail::digest({cur.t, next.V - cur.V}), next.V - cur.V});
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Coriolis identity.
// ---------------------------------------------------------------------------

inline CheckReport check_coriolis(std::uint64_t seed, int samples) {
  CheckReport rep;
  rep.name = "coriolis_identity";
  rep.tolerance = 1e-4;
  Rng rng(seed);
  for (int i = 0; i < samples; ++i) {
    const int n = rng.uniform_int(1, 3);
    const GdsLeaf leaf = random_gds_leaf(rng, n, false);
    const Vector x = rng.uniform_vector(n, -1.5, 1.5);
    const Vector xd = rng.uniform_vector(n, -1.0, 1.0);
    const Vector via_c = coriolis_matrix(leaf.metric, x, xd) * xd;
    const Vector xi = curvature_xi(leaf.metric, x, xd);
    detail::observe(rep, (via_c - xi).norm(), detail::rel_err(via_c, xi), rep.tolerance,
                    detail::flatten({&x, &xd}));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Invariance under reparameterization.
// ---------------------------------------------------------------------------

struct Diffeo {
  TaskMap map;  // q = phi(q'), 1-D, strictly monotone
  std::function<double(double)> inverse;
};

inline Diffeo identity_diffeo() {
  return {identity_map(1), [](double q) { return q; }};
}

inline Diffeo linear_diffeo(double scale) {
  TaskMap m;
  m.input_dim = m.output_dim = 1;
  m.value = [scale](const Vector& q) { return Vector(scale * q); };
  m.jacobian = [scale](const Vector&) { return Matrix(Matrix::Constant(1, 1, scale)); };
  m.jdot_times_xdot = [](const Vector&, const Vector&) { return Vector(Vector::Zero(1)); };
  return {std::move(m), [scale](double q) { return q / scale; }};
}

/// q = q'^3 + q', strictly monotone with analytic first and second
/// derivatives; inverted by Newton iteration.
inline Diffeo cubic_diffeo() {
  TaskMap m;
  m.input_dim = m.output_dim = 1;
  m.value = [](const Vector& q) {
    return Vector(Vector::Constant(1, q(0) * q(0) * q(0) + q(0)));
  };
  m.jacobian = [](const Vector& q) {
    return Matrix(Matrix::Constant(1, 1, 3.0 * q(0) * q(0) + 1.0));
  };
  m.jdot_times_xdot = [](const Vector& q, const Vector& qd) {
    return Vector(Vector::Constant(1, 6.0 * q(0) * qd(0) * qd(0)));
  };
  auto inverse = [](double target) {
    double z = target;
    for (int i = 0; i < 100; ++i) {
      const double f = z * z * z + z - target;
      if (std::abs(f) < 1e-14) break;
      z -= f / (3.0 * z * z + 1.0);
    }
    return z;
  };
  return {std::move(m), inverse};
}

/// Section-4.4 consequence: the same leaf set produces identical task-space
/// trajectories no matter how the configuration space is parameterized.
/// Integrates the 1-D experiment under q and under q = phi(q') from matched
/// initial task states and compares the task trajectories in sup norm.
inline CheckReport check_invariance(const Diffeo& diffeo, double tolerance,
                                    double q0 = 2.0, double qdot0 = -1.0,
                                    double horizon = 2.0, double dt = 1e-4) {
  CheckReport rep;
  rep.name = "invariance";
  rep.tolerance = tolerance;

  const double x_goal = 1.0;
  RmpTree base(1);
  base.root().add_leaf("barrier", reciprocal_map(), exp1d_leaf(x_goal, Exp1dDamping::kStandard));

  RmpTree reparam(1);
  reparam.root()
      .add_child("phi", diffeo.map)
      .add_leaf("barrier", reciprocal_map(), exp1d_leaf(x_goal, Exp1dDamping::kStandard));

  SimState a{0.0, Vector::Constant(1, q0), Vector::Constant(1, qdot0)};
  const double qp0 = diffeo.inverse(q0);
  const double jac = diffeo.map.jacobian(Vector::Constant(1, qp0))(0, 0);
  SimState b{0.0, Vector::Constant(1, qp0), Vector::Constant(1, qdot0 / jac)};

  const Policy pa = base.policy();
  const Policy pb = reparam.policy();
  const TaskMap task = reciprocal_map();

  double sup = 0.0;
  const int steps = static_cast<int>(std::lround(horizon / dt));
  for (int i = 0; i < steps; ++i) {
    a = integrate_step(pa, a, dt);
    b = integrate_step(pb, b, dt);
    const double xa = task.value(a.q)(0);
    const double xb = task.value(diffeo.map.value(b.q))(0);
    sup = std::max(sup, std::abs(xa - xb));
  }
  rep.samples = steps;
  rep.max_abs_err = rep.max_rel_err = sup;
  rep.passed = sup < tolerance;
  if (!rep.passed) rep.failures.push_back({detail::digest({q0, qdot0}), sup});
  return rep;
}

// ---------------------------------------------------------------------------
// PSD curvature condition of the barrier metrics.
// ---------------------------------------------------------------------------

inline CheckReport check_xi_psd(std::uint64_t seed, int samples) {
  CheckReport rep;
  rep.name = "xi_psd";
  rep.tolerance = 1e-10;  // bound on the negative part of the spectrum
  Rng rng(seed);

  CollisionParams cp;
  const GdsLeaf collision = collision_leaf(cp);

  JointLimitParams jl;
  jl.lower = rmpflow::Vector::Constant(3, -1.5);
  jl.upper = rmpflow::Vector::Constant(3, 1.5);
  jl.rest_posture = rmpflow::Vector::Zero(3);
  const GdsLeaf limits = jointlimit_leaf(jl);

  GdsLeaf constant = random_gds_leaf(rng, 2, false);

  for (int i = 0; i < samples; ++i) {
    {
      const Vector s = Vector::Constant(1, rng.uniform(0.02, 1.5));
      const Vector sd = Vector::Constant(1, rng.uniform(-3.0, 3.0));
      const double mineig = min_eigenvalue_sym(collision.curvature_Xi_fn(s, sd));
      detail::observe(rep, std::max(0.0, -mineig), std::max(0.0, -mineig), rep.tolerance,
                      detail::flatten({&s, &sd}));
    }
    {
      Vector q(3), qd(3);
      for (int j = 0; j < 3; ++j) {
        q(j) = rng.uniform(-1.4, 1.4);
        qd(j) = rng.uniform(-3.0, 3.0);
      }
      const double mineig = min_eigenvalue_sym(limits.curvature_Xi_fn(q, qd));
      detail::observe(rep, std::max(0.0, -mineig), std::max(0.0, -mineig), rep.tolerance,
                      detail::flatten({&q, &qd}));
    }
    {
      // Constant-in-velocity metric: Xi identically zero.
      const Vector x = rng.uniform_vector(2, -1.0, 1.0);
      const Vector xd = rng.uniform_vector(2, -1.0, 1.0);
      const Matrix Xi = curvature_Xi(constant.metric, x, xd);
      detail::observe(rep, Xi.norm(), Xi.norm(), rep.tolerance, detail::flatten({&x, &xd}));
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Diagonal-RMP scaling identity.
// ---------------------------------------------------------------------------

/// Both routes of the Jacobian-scaling identity: direct resolve of the
/// combined pullback versus D times the rescaled least-squares solution with
/// J~ = J D and D = (A / lambda)^{-1/2}.
inline CheckReport check_diagonal_scaling(std::uint64_t seed, int samples) {
  CheckReport rep;
  rep.name = "diagonal_scaling";
  rep.tolerance = 1e-8;
  Rng rng(seed);

  for (int i = 0; i < samples; ++i) {
    const int d = rng.uniform_int(1, 4);
    JointLimitParams jl;
    jl.lower = rmpflow::Vector::Constant(d, -2.0);
    jl.upper = rmpflow::Vector::Constant(d, 2.0);
    jl.rest_posture = rng.uniform_vector(d, -0.5, 0.5);
    jl.lambda = rng.uniform(0.1, 2.0);
    const Vector q = rng.uniform_vector(d, -1.8, 1.8);
    const Vector qd = rng.uniform_vector(d, -2.0, 2.0);
    const JointLimitDiag jld = jointlimit_diag(q, qd, jl);
    const Vector qddl =
        jl.eta_p * (jl.rest_posture - q) - jl.eta_d * qd - jld.xi_a.cwiseQuotient(jld.a);

    const int n_tasks = rng.uniform_int(1, 3);
    std::vector<ChildPull> pulls;
    struct Task {
      Matrix J, M;
      Vector acc, jdx;
    };
    std::vector<Task> tasks;
    for (int k = 0; k < n_tasks; ++k) {
      const int td = rng.uniform_int(1, 3);
      Task task;
      task.J = Matrix(td, d);
      for (int r = 0; r < td; ++r)
        for (int c = 0; c < d; ++c) task.J(r, c) = rng.normal();
      task.M = rng.psd_matrix(td, 0.05);
      task.acc = rng.normal_vector(td);
      task.jdx = rng.normal_vector(td);
      pulls.push_back({{task.M * task.acc, task.M}, task.J, task.jdx});
      tasks.push_back(std::move(task));
    }
    NaturalRmp combined = pullback(pulls, d);
    combined.f += jld.a.cwiseProduct(qddl);
    combined.M += Matrix(jld.a.asDiagonal());
    const Vector lhs = resolve(combined).a;

    // Right-hand side: scaled least squares with J~ = J D.
    const Vector Ddiag = (jld.a / jl.lambda).cwiseSqrt().cwiseInverse();
    Matrix N = jl.lambda * Matrix::Identity(d, d);
    Vector r = jl.lambda * Ddiag.cwiseInverse().cwiseProduct(qddl);
    for (const auto& task : tasks) {
      const Matrix Jt = task.J * Ddiag.asDiagonal();
      N += Jt.transpose() * task.M * Jt;
      r += Jt.transpose() * task.M * (task.acc - task.jdx);
    }
    const Vector rhs = Ddiag.asDiagonal() * pseudo_inverse_apply(N, r);

    detail::observe(rep, (lhs - rhs).norm(), detail::rel_err(lhs, rhs), rep.tolerance,
                    detail::flatten({&q, &qd}));
  }
  return rep;
}

/// Combined 2-D tree of the controlled experiments: quartic collision leaf on
/// the obstacle distance plus the uniform-metric attractor on y = q - goal.
inline RmpTree combined_2d_tree(const Vector& goal, double obstacle_radius = 0.4,
                                double alpha = 1e-3, double attractor_damp = 2.0) {
  Scene scene;
  scene.obstacles.push_back({Vector::Zero(2), obstacle_radius});
  scene.goal = goal;
  Exp2dParams params;
  params.collision.alpha = alpha;
  params.collision.epsilon = 1e-6;
  params.attractor.w_u = 10.0;
  params.attractor.w_l = 1.0;
  params.attractor.damp = attractor_damp;
  params.with_attractor = true;
  return build_exp2d_tree(scene, params);
}

/// Energy-rate identity Vdot = -qdot^T B qdot along seeded rollouts of the
/// combined 2-D tree. Samples are recorded every integrator step so the
/// numerical derivative of V stays within its O(dt^2) budget.
inline CheckReport check_lyapunov_2d(std::uint64_t seed, int trials = 10,
                                     double horizon = 2.0, double dt = 1e-3) {
  CheckReport rep;
  rep.name = "lyapunov_2d_combined";
  rep.tolerance = std::max(1e-6, 10.0 * dt * dt);
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    Vector goal(2), q0(2);
    do {
      goal << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
    } while (goal.norm() < 0.8);
    do {
      q0 << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
    } while (q0.norm() < 0.8 || (q0 - goal).norm() < 0.5);
    RmpTree tree = combined_2d_tree(goal);
    IntegratorParams ip;
    ip.dt = dt;
    ip.record_dt = dt;
    ip.timeout = horizon;
    ip.v_eps = 0.0;
    auto [traj, metrics] = run_trial(tree, q0, rng.normal_vector(2, 0.3), ip);
    if (metrics.failed) {
      rep.passed = false;
      rep.failures.push_back({detail::digest({q0(0), q0(1)}), -1.0});
      continue;
    }
    CheckReport one = check_lyapunov(traj, tree);
    rep.samples += one.samples;
    rep.max_abs_err = std::max(rep.max_abs_err, one.max_abs_err);
    rep.max_rel_err = std::max(rep.max_rel_err, one.max_rel_err);
    if (!one.passed) {
      rep.passed = false;
      for (const auto& f : one.failures)
        if (rep.failures.size() < 16) rep.failures.push_back(f);
    }
  }
  return rep;
}

/// Energy-rate identity along the 1-D experiment; with use_jdot=false this
/// is the expected-fail ablation fixture (it must report violations).
inline CheckReport check_lyapunov_1d(bool use_jdot, double q0 = 2.0, double qdot0 = -1.0,
                                     double horizon = 5.0, double dt = 1e-3) {
  RmpTree tree = build_exp1d_tree(1.0);
  tree.options.use_jdot = use_jdot;
  IntegratorParams ip;
  ip.dt = dt;
  ip.record_dt = dt;
  ip.timeout = horizon;
  ip.v_eps = 0.0;
  auto [traj, metrics] = run_trial(tree, Vector::Constant(1, q0),
                                   Vector::Constant(1, qdot0), ip);
  CheckReport rep = check_lyapunov(traj, tree);
  rep.name = use_jdot ? "lyapunov_1d" : "lyapunov_1d_nojdot";
  if (metrics.failed) {
    rep.passed = false;
    rep.note = "trial failed: " + metrics.failure_reason;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Geodesic conservation (unforced, undamped GDSs).
// ---------------------------------------------------------------------------

/// With Phi = 0 and B = 0 everywhere, the kinetic energy 1/2 qdot^T G qdot is
/// a constant of motion; checks the relative drift along RK4 rollouts of the
/// 2-D obstacle tree (plus a small constant-metric ballast keeping the root
/// inertia nonsingular).
inline CheckReport check_geodesic(std::uint64_t seed, int trials = 3, double horizon = 10.0,
                                  double dt = 1e-3) {
  CheckReport rep;
  rep.name = "geodesic_conservation";
  rep.tolerance = 1e-6;
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    Scene scene;
    scene.obstacles.push_back({Vector::Zero(2), rng.uniform(0.3, 0.5)});
    Exp2dParams params;
    params.collision.epsilon = 1e-2;
    RmpTree tree = build_exp2d_tree(scene, params);
    GdsLeaf ballast;
    ballast.dim = 2;
    ballast.velocity_free_metric = true;
    ballast.metric = [](const Vector&, const Vector&) {
      return Matrix(0.1 * Matrix::Identity(2, 2));
    };
    ballast.damping = [](const Vector&, const Vector&) { return Matrix(Matrix::Zero(2, 2)); };
    ballast.potential_grad = [](const Vector&) { return Vector(Vector::Zero(2)); };
    ballast.potential_value = [](const Vector&) { return 0.0; };
    ballast.curvature_xi_fn = [](const Vector&, const Vector&) {
      return Vector(Vector::Zero(2));
    };
    tree.root().add_leaf("ballast", identity_map(2), ballast);

    const Policy policy = tree.policy();
    SimState s{0.0, Vector(2), Vector(2)};
    s.q << rng.uniform(-2.5, -1.5), rng.uniform(-0.5, 0.5);
    s.qdot << rng.uniform(0.6, 1.2), rng.uniform(-0.2, 0.2);
    const double k0 = tree.energy(s.q, s.qdot).kinetic;
    double max_drift = 0.0;
    const int steps = static_cast<int>(std::lround(horizon / dt));
    for (int i = 0; i < steps; ++i) {
      s = integrate_step(policy, s, dt);
      max_drift = std::max(max_drift, std::abs(tree.energy(s.q, s.qdot).kinetic - k0) / k0);
    }
    detail::observe(rep, max_drift, max_drift, rep.tolerance,
                    detail::flatten({&s.q, &s.qdot}));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Long-horizon convergence to the forward-invariant set.
// ---------------------------------------------------------------------------

/// Long-horizon stability, tested behaviorally: seeded runs of the combined
/// 2-D tree terminate with small velocity and a small pulled-back potential
/// gradient (the defining conditions of the invariant set).
inline CheckReport check_convergence(std::uint64_t seed, int trials = 50,
                                     double horizon = 60.0) {
  CheckReport rep;
  rep.name = "convergence_invariant_set";
  rep.tolerance = 1e-2;  // bound on |grad Phi| at termination; |qdot| < 1e-3
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    Scene scene;
    scene.obstacles.push_back({Vector::Zero(2), 0.4});
    scene.goal = Vector(2);
    do {
      scene.goal << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
    } while (scene.goal.norm() < 0.8);
    Exp2dParams params;
    params.collision.alpha = 1e-3;
    params.collision.epsilon = 1e-6;
    params.attractor.w_u = 10.0;
    params.attractor.w_l = 1.0;
    params.attractor.damp = 2.0;
    params.with_attractor = true;
    RmpTree tree = build_exp2d_tree(scene, params);

    Vector q0(2);
    do {
      q0 << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
    } while (q0.norm() < 0.8);
    const Vector qd0 = rng.normal_vector(2, 0.5);

    IntegratorParams ip;
    ip.timeout = horizon;
    // Stop well inside the asserted bounds: the snapshot then satisfies
    // |qdot| < 1e-3 with |grad Phi| comfortably under 1e-2.
    ip.v_eps = 4e-4;
    ip.a_eps = 2e-4;
    ip.record_dt = 0.1;
    auto [traj, metrics] = run_trial(tree, q0, qd0, ip, particle_trial_context(scene, true));
    double err = 1.0;
    if (!metrics.failed) {
      const auto& last = traj.samples.back();
      const double grad_norm = tree.pulled_back(last.q, last.qdot).grad_potential.norm();
      const double vel = last.qdot.norm();
      err = std::max(grad_norm, vel <= 1e-3 ? 0.0 : 1.0);
    }
    detail::observe(rep, err, err, rep.tolerance, detail::flatten({&q0, &qd0}));
  }
  return rep;
}

}  // namespace rmpflow::verify
