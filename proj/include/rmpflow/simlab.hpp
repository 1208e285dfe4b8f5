#pragma once

#include <limits>
#include <optional>

#include "rmpflow/integrate.hpp"
#include "rmpflow/policies.hpp"
#include "rmpflow/rng.hpp"
#include "rmpflow/tree.hpp"

namespace rmpflow {

// ---------------------------------------------------------------------------
// Scenes and experiment trees.
// ---------------------------------------------------------------------------

struct Disk {
  Vector center;
  double radius = 0.0;
};

struct Scene {
  std::vector<Disk> obstacles;
  Vector goal;  // workspace goal (may be resized per trial)
  PlanarArm arm;
  Vector joint_lower, joint_upper, rest_posture;
};

struct IntegratorParams {
  double dt = 1e-3;
  double record_dt = 1e-2;
  double timeout = 5.0;
  double v_eps = 1e-3;
  double a_eps = 1e-3;
  double hold = 0.1;  // time both thresholds must hold before declaring convergence
};

/// Non-standard damping used by the ablation study: B = 1 + xdot^2 / x
/// instead of B = 1 + 1/x.
enum class Exp1dDamping { kStandard, kNonlinearVelocity };

/// The 1-D controlled experiment: q in R, barrier map x = 1/q, GDS leaf with
/// G = 1, Phi = (x - x_goal)^2 / 2.
inline GdsLeaf exp1d_leaf(double x_goal, Exp1dDamping damping) {
  GdsLeaf leaf;
  leaf.dim = 1;
  leaf.label = "exp1d";
  leaf.velocity_free_metric = true;
  leaf.metric = [](const Vector&, const Vector&) { return Matrix(Matrix::Identity(1, 1)); };
  leaf.damping = [damping](const Vector& x, const Vector& xd) {
    const double b = damping == Exp1dDamping::kStandard
                         ? 1.0 + 1.0 / x(0)
                         : 1.0 + xd(0) * xd(0) / x(0);
    return Matrix(Matrix::Constant(1, 1, b));
  };
  leaf.potential_grad = [x_goal](const Vector& x) {
    return Vector(Vector::Constant(1, x(0) - x_goal));
  };
  leaf.potential_value = [x_goal](const Vector& x) {
    return 0.5 * (x(0) - x_goal) * (x(0) - x_goal);
  };
  leaf.curvature_xi_fn = [](const Vector&, const Vector&) { return Vector(Vector::Zero(1)); };
  return leaf;
}

inline RmpTree build_exp1d_tree(double x_goal,
                                Exp1dDamping damping = Exp1dDamping::kStandard) {
  RmpTree tree(1);
  tree.root().add_leaf("barrier", reciprocal_map(), exp1d_leaf(x_goal, damping));
  return tree;
}

/// Designed task-space dynamics of the 1-D experiment (G = 1 is constant, so
/// there are no curvature terms): xddot = -(x - x_goal) - B(x, xdot) xdot.
inline Policy exp1d_reference_policy(double x_goal,
                                     Exp1dDamping damping = Exp1dDamping::kStandard) {
  return [x_goal, damping](const Vector& x, const Vector& xd) {
    const double b = damping == Exp1dDamping::kStandard
                         ? 1.0 + 1.0 / x(0)
                         : 1.0 + xd(0) * xd(0) / x(0);
    return Vector(Vector::Constant(1, -(x(0) - x_goal) - b * xd(0)));
  };
}

struct Exp2dParams {
  InvQuarticParams collision;
  AttractorParams attractor;
  bool with_attractor = false;
  std::optional<double> damper_lambda;  // optional small C-space inertia
  std::optional<double> damper_c;
};

/// Point-particle tree of the 2-D experiments: one quartic collision leaf per
/// obstacle on its distance space, optionally the attractor on y = q - goal.
inline RmpTree build_exp2d_tree(const Scene& scene, const Exp2dParams& p) {
  RmpTree tree(2);
  int i = 0;
  for (const auto& obs : scene.obstacles) {
    tree.root().add_leaf("obstacle" + std::to_string(i++),
                         sphere_distance_map(obs.center, obs.radius),
                         inv_quartic_collision_leaf(p.collision));
  }
  if (p.with_attractor)
    tree.root().add_leaf("attractor", offset_map(scene.goal), attractor_leaf(2, p.attractor));
  if (p.damper_lambda && p.damper_c)
    tree.root().add_leaf("damper", identity_map(2),
                         cspace_damper_leaf(2, *p.damper_lambda, *p.damper_c));
  return tree;
}

// ---------------------------------------------------------------------------
// Reaching suite trees (RMPflow method and the potential-field baselines).
// ---------------------------------------------------------------------------

struct ReachLeafParams {
  CollisionParams collision;
  AttractorParams attractor;
  double jl_sigma = 0.1, jl_lambda = 0.25, jl_eta_p = 1.0, jl_eta_d = 2.0;
  double damper_lambda = 1e-3, damper_c = 0.1;
};

enum class PfKind { kBasic, kNonlinear };

struct PfBaselineSpec {
  PfKind kind = PfKind::kBasic;
  /// (obstacle weight scalar, C-space weight scalar); baseline is (1, 1),
  /// low (3, 10), med (5, 50), high (10, 100).
  double obstacle_scale = 1.0;
  double cspace_scale = 1.0;
  double w_obstacle = 1.0;   // w_o^max
  double alpha = 0.3;        // bounded repulsion gain
  double gamma_p = 1.0;      // posture controller gains
  double gamma_d = 2.0;
  double w_cspace = 1.0;
};

inline PfBaselineSpec pf_scaling(PfBaselineSpec spec, const std::string& level) {
  if (level == "baseline") {
    spec.obstacle_scale = 1.0;
    spec.cspace_scale = 1.0;
  } else if (level == "low") {
    spec.obstacle_scale = 3.0;
    spec.cspace_scale = 10.0;
  } else if (level == "med") {
    spec.obstacle_scale = 5.0;
    spec.cspace_scale = 50.0;
  } else if (level == "high") {
    spec.obstacle_scale = 10.0;
    spec.cspace_scale = 100.0;
  } else {
    throw std::invalid_argument("unknown PF scaling level '" + level + "'");
  }
  return spec;
}

inline JointLimitParams reach_joint_limits(const Scene& scene, const ReachLeafParams& p) {
  JointLimitParams jl;
  jl.lower = scene.joint_lower;
  jl.upper = scene.joint_upper;
  jl.rest_posture = scene.rest_posture;
  jl.sigma = p.jl_sigma;
  jl.lambda = p.jl_lambda;
  jl.eta_p = p.jl_eta_p;
  jl.eta_d = p.jl_eta_d;
  return jl;
}

/// RMPflow tree of the reaching experiment: per control point a node in the
/// 2-D workspace carrying one distance-space collision leaf per obstacle;
/// attractor on the end-effector; joint limits and a damper on the root.
inline RmpTree build_reach_tree(const Scene& scene, const ReachLeafParams& p) {
  scene.arm.validate();
  const int d = scene.arm.dof();
  RmpTree tree(d);
  for (int cp = 0; cp < static_cast<int>(scene.arm.control_points.size()); ++cp) {
    RmpNode& point = tree.root().add_child("cp" + std::to_string(cp),
                                           arm_control_point_map(scene.arm, cp));
    for (int o = 0; o < static_cast<int>(scene.obstacles.size()); ++o)
      point.add_leaf("obstacle" + std::to_string(o),
                     sphere_distance_map(scene.obstacles[o].center, scene.obstacles[o].radius),
                     collision_leaf(p.collision));
  }
  // End effector is control point 0 by convention.
  tree.root()
      .add_child("ee", arm_control_point_map(scene.arm, 0))
      .add_leaf("attractor", offset_map(scene.goal),
                attractor_leaf(2, p.attractor));
  tree.root().add_leaf("joint_limits", identity_map(d),
                       jointlimit_leaf(reach_joint_limits(scene, p)));
  tree.root().add_leaf("damper", identity_map(d),
                       cspace_damper_leaf(d, p.damper_lambda, p.damper_c));
  return tree;
}

/// Isotropic-metric obstacle leaf of the PF baselines, living directly on the
/// control-point workspace. The repulsion is the classic bounded potential
/// 1/2 alpha w ((r_w - s)_+ / r_w)^2 (finite force at contact), the weight
/// ignores direction, and curvature terms are dropped.
inline GdsLeaf pf_obstacle_leaf(const Disk& obs, const CollisionParams& cp, PfKind kind,
                                double weight, double alpha) {
  GdsLeaf leaf;
  leaf.dim = 2;
  leaf.label = "pf_obstacle";
  leaf.velocity_free_metric = true;
  leaf.drop_curvature = true;
  auto dist = [obs](const Vector& x) { return (x - obs.center).norm() - obs.radius; };
  auto proximity = [cp](double s) { return std::max(cp.r_w - std::max(s, 0.0), 0.0) / cp.r_w; };
  leaf.metric = [dist, proximity, kind, weight](const Vector& x, const Vector&) {
    double w = weight;
    if (kind == PfKind::kNonlinear) {
      // Ranges from 0 far away to the full weight at contact.
      const double t = proximity(dist(x));
      w *= t * t;
    }
    return Matrix(w * Matrix::Identity(2, 2));
  };
  leaf.damping = [leaf_metric = leaf.metric, cp](const Vector& x, const Vector& xd) {
    return Matrix(cp.eta_damp * leaf_metric(x, xd));
  };
  leaf.potential_grad = [dist, proximity, obs, cp, weight, alpha](const Vector& x) {
    const double u = proximity(dist(x));
    const Vector offset = x - obs.center;
    const double n = offset.norm();
    if (n == 0.0 || u == 0.0) return Vector(Vector::Zero(2));
    return Vector(-(alpha * weight * u / cp.r_w) * (offset / n));
  };
  leaf.potential_value = [dist, proximity, cp, weight, alpha](const Vector& x) {
    const double u = proximity(dist(x));
    return 0.5 * alpha * weight * u * u;
  };
  return leaf;
}

/// C-space posture controller f = w (gamma_p (q0 - q) - gamma_d qdot) with
/// isotropic metric w I; a plain constant-metric GDS.
inline GdsLeaf pf_posture_leaf(int dim, const Vector& q0, double weight, double gamma_p,
                               double gamma_d) {
  GdsLeaf leaf;
  leaf.dim = dim;
  leaf.label = "pf_posture";
  leaf.velocity_free_metric = true;
  leaf.metric = [dim, weight](const Vector&, const Vector&) {
    return Matrix(weight * Matrix::Identity(dim, dim));
  };
  leaf.damping = [dim, weight, gamma_d](const Vector&, const Vector&) {
    return Matrix(weight * gamma_d * Matrix::Identity(dim, dim));
  };
  leaf.potential_grad = [q0, weight, gamma_p](const Vector& q) {
    return Vector(weight * gamma_p * (q - q0));
  };
  leaf.potential_value = [q0, weight, gamma_p](const Vector& q) {
    return 0.5 * weight * gamma_p * (q - q0).squaredNorm();
  };
  leaf.curvature_xi_fn = [dim](const Vector&, const Vector&) {
    return Vector(Vector::Zero(dim));
  };
  return leaf;
}

/// Potential-field baseline: collision controllers on the control points with
/// isotropic (constant or proximity-scaled) metrics, the same attractor
/// potential with an isotropic metric, and a C-space posture controller.
/// All curvature terms are dropped.
inline RmpTree pf_baseline_tree(const Scene& scene, const ReachLeafParams& p,
                                const PfBaselineSpec& spec) {
  scene.arm.validate();
  const int d = scene.arm.dof();
  RmpTree tree(d);
  const double w_obs = spec.w_obstacle * spec.obstacle_scale;
  for (int cp = 0; cp < static_cast<int>(scene.arm.control_points.size()); ++cp) {
    RmpNode& point = tree.root().add_child("cp" + std::to_string(cp),
                                           arm_control_point_map(scene.arm, cp));
    for (int o = 0; o < static_cast<int>(scene.obstacles.size()); ++o)
      point.add_leaf("obstacle" + std::to_string(o),
                     identity_map(2),
                     pf_obstacle_leaf(scene.obstacles[o], p.collision, spec.kind, w_obs,
                                      spec.alpha));
  }
  AttractorParams att = p.attractor;
  att.metric_kind = AttractorMetricKind::kUniform;
  if (spec.kind == PfKind::kBasic) att.w_l = att.w_u;  // constant isotropic metric
  GdsLeaf att_leaf = attractor_leaf(2, att);
  att_leaf.drop_curvature = true;
  tree.root()
      .add_child("ee", arm_control_point_map(scene.arm, 0))
      .add_leaf("attractor", offset_map(scene.goal), std::move(att_leaf));
  tree.root().add_leaf("posture", identity_map(d),
                       pf_posture_leaf(d, scene.rest_posture, spec.w_cspace * spec.cspace_scale,
                                       spec.gamma_p, spec.gamma_d));
  return tree;
}

// ---------------------------------------------------------------------------
// Trials and metrics.
// ---------------------------------------------------------------------------

struct TrajectorySample {
  double t = 0.0;
  Vector q;
  Vector qdot;
  double V = 0.0;         // total energy 1/2 qdot^T G qdot + Phi
  double K = 0.0;         // kinetic part
  double min_dist = 0.0;  // smallest obstacle distance (or task value, see context)
  double m_eig_min = 0.0, m_eig_max = 0.0;  // root inertia spectrum
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
};

struct TrialMetrics {
  double time_to_goal = 0.0;
  double cspace_path_length = 0.0;
  double min_goal_distance = 0.0;
  double collision_intensity = 0.0;  // fraction of trial time in collision
  bool collided = false;
  bool timed_out = false;
  bool failed = false;
  std::string failure_reason;
};

struct TrialContext {
  /// Smallest obstacle distance for collision flagging; empty means no
  /// obstacles (min_dist column then records the first task value).
  std::function<double(const Vector& q)> min_obstacle_distance;
  /// Distance to the goal in task space; empty means |q - goal| is not
  /// meaningful and min_goal_distance stays at its initial value.
  std::function<double(const Vector& q)> goal_distance;
};

/// Closed-loop rollout with convergence/timeout termination, recorded
/// diagnostics and the suite performance measures.
inline std::pair<Trajectory, TrialMetrics> run_trial(RmpTree& tree, const Vector& q0,
                                                     const Vector& qdot0,
                                                     const IntegratorParams& ip,
                                                     const TrialContext& ctx = {}) {
  Trajectory traj;
  TrialMetrics metrics;
  metrics.min_goal_distance = std::numeric_limits<double>::infinity();

  SimState s{0.0, q0, qdot0};
  const Policy policy = tree.policy();

  double time_in_collision = 0.0;
  double settled_since = -1.0;
  bool converged = false;

  auto min_dist_at = [&](const Vector& q) {
    return ctx.min_obstacle_distance ? ctx.min_obstacle_distance(q)
                                     : std::numeric_limits<double>::quiet_NaN();
  };

  auto record = [&](const SimState& st) {
    TrajectorySample sample;
    sample.t = st.t;
    sample.q = st.q;
    sample.qdot = st.qdot;
    const EnergyReport e = tree.energy(st.q, st.qdot);
    sample.K = e.kinetic;
    sample.V = e.total();
    sample.min_dist = min_dist_at(st.q);
    const NaturalRmp root = tree.evaluate(st.q, st.qdot).root;
    sample.m_eig_min = min_eigenvalue_sym(root.M);
    sample.m_eig_max = max_eigenvalue_sym(root.M);
    traj.samples.push_back(std::move(sample));
  };

  try {
    record(s);
    const int steps_per_record = std::max(1, static_cast<int>(std::lround(ip.record_dt / ip.dt)));
    int step = 0;
    while (s.t < ip.timeout - 0.5 * ip.dt) {
      const Vector qdd = policy(s.q, s.qdot);
      const SimState next = integrate_step(policy, s, ip.dt);
      if (!is_finite(next.q) || !is_finite(next.qdot))
        throw std::runtime_error("state became non-finite at t=" + std::to_string(s.t));

      metrics.cspace_path_length += 0.5 * (s.qdot.norm() + next.qdot.norm()) * ip.dt;
      if (ctx.goal_distance)
        metrics.min_goal_distance = std::min(metrics.min_goal_distance, ctx.goal_distance(next.q));
      if (ctx.min_obstacle_distance && min_dist_at(next.q) < 0.0) {
        metrics.collided = true;
        time_in_collision += ip.dt;
      }

      s = next;
      ++step;
      if (step % steps_per_record == 0) record(s);

      if (s.qdot.norm() < ip.v_eps && qdd.norm() < ip.a_eps) {
        if (settled_since < 0.0) settled_since = s.t;
        if (s.t - settled_since >= ip.hold) {
          converged = true;
          break;
        }
      } else {
        settled_since = -1.0;
      }
    }
    if (traj.samples.back().t < s.t) record(s);

    metrics.timed_out = !converged;
    metrics.time_to_goal = converged ? std::max(settled_since, 0.0) : ip.timeout;
    metrics.collision_intensity = s.t > 0.0 ? time_in_collision / s.t : 0.0;
    if (ctx.goal_distance && !std::isfinite(metrics.min_goal_distance))
      metrics.min_goal_distance = ctx.goal_distance(q0);
    if (!ctx.goal_distance) metrics.min_goal_distance = 0.0;
  } catch (const std::exception& e) {
    metrics.failed = true;
    metrics.failure_reason = e.what();
    metrics.timed_out = true;
    metrics.time_to_goal = ip.timeout;
  }
  return {std::move(traj), std::move(metrics)};
}

/// Convenience context for planar scenes: distance of every control point to
/// every obstacle surface, and end-effector distance to the goal.
inline TrialContext arm_trial_context(const Scene& scene) {
  TrialContext ctx;
  std::vector<TaskMap> cp_maps;
  for (int cp = 0; cp < static_cast<int>(scene.arm.control_points.size()); ++cp)
    cp_maps.push_back(arm_control_point_map(scene.arm, cp));
  ctx.min_obstacle_distance = [cp_maps, obstacles = scene.obstacles](const Vector& q) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : cp_maps) {
      const Vector x = m.value(q);
      for (const auto& o : obstacles) best = std::min(best, (x - o.center).norm() - o.radius);
    }
    return best;
  };
  TaskMap ee = cp_maps.at(0);
  ctx.goal_distance = [ee, goal = scene.goal](const Vector& q) {
    return (ee.value(q) - goal).norm();
  };
  return ctx;
}

/// Point-particle context of the 2-D experiments.
inline TrialContext particle_trial_context(const Scene& scene, bool with_goal) {
  TrialContext ctx;
  if (!scene.obstacles.empty()) {
    ctx.min_obstacle_distance = [obstacles = scene.obstacles](const Vector& q) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& o : obstacles) best = std::min(best, (q - o.center).norm() - o.radius);
      return best;
    };
  }
  if (with_goal)
    ctx.goal_distance = [goal = scene.goal](const Vector& q) { return (q - goal).norm(); };
  return ctx;
}

// ---------------------------------------------------------------------------
// Reaching suite.
// ---------------------------------------------------------------------------

struct MethodSpec {
  std::string name = "rmpflow";  // rmpflow | pf_basic | pf_nonlinear
  std::string scaling = "baseline";

  std::string label() const {
    return name == "rmpflow" ? name : name + "_" + scaling;
  }
};

struct SuiteSpec {
  std::vector<Scene> scenes;
  int targets_per_scene = 10;
  std::uint64_t seed = 0;
  IntegratorParams integrator;
  ReachLeafParams leaves;
  PfBaselineSpec pf;
  std::vector<MethodSpec> methods;
  Vector target_lo, target_hi;  // sampling box for goal positions
  int jobs = 1;
};

struct TrialRecord {
  int scene_index = 0;
  int target_index = 0;
  std::string method;
  Vector target;
  TrialMetrics metrics;
  Trajectory trajectory;
};

struct MetricStat {
  double mean = 0.0;
  double stddev = 0.0;
};

inline MetricStat metric_stat(const std::vector<double>& xs) {
  MetricStat st;
  if (xs.empty()) return st;
  for (double x : xs) st.mean += x;
  st.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - st.mean) * (x - st.mean);
  st.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return st;
}

struct MethodSummary {
  MetricStat time_to_goal;
  MetricStat path_length;
  MetricStat goal_distance;
  MetricStat collision_intensity;  // over colliding trials only
  double collided_fraction = 0.0;
  int trials = 0;
  int failures = 0;
};

struct SuiteSummary {
  std::vector<std::vector<Vector>> targets;  // per scene, shared across methods
  std::vector<TrialRecord> records;          // ordered (method, scene, target)
  std::vector<std::pair<std::string, MethodSummary>> by_method;
};

/// Goal positions per scene: uniform in the box, rejecting points inside a
/// dilated obstacle or outside the arm's reach annulus.
inline std::vector<Vector> sample_targets(const Scene& scene, int count, Rng& rng,
                                          const Vector& lo, const Vector& hi,
                                          double obstacle_margin = 0.05) {
  double reach = 0.0;
  for (double l : scene.arm.link_lengths) reach += l;
  std::vector<Vector> out;
  int guard = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++guard > 100000)
      throw std::runtime_error("sample_targets: rejection sampling does not terminate");
    Vector t(2);
    t(0) = rng.uniform(lo(0), hi(0));
    t(1) = rng.uniform(lo(1), hi(1));
    bool ok = t.norm() < 0.95 * reach;
    for (const auto& o : scene.obstacles)
      ok = ok && (t - o.center).norm() > o.radius + obstacle_margin;
    if (ok) out.push_back(std::move(t));
  }
  return out;
}

inline RmpTree build_method_tree(const Scene& scene, const SuiteSpec& spec,
                                 const MethodSpec& method) {
  if (method.name == "rmpflow") return build_reach_tree(scene, spec.leaves);
  PfBaselineSpec pf = pf_scaling(spec.pf, method.scaling);
  pf.kind = method.name == "pf_basic" ? PfKind::kBasic : PfKind::kNonlinear;
  if (method.name != "pf_basic" && method.name != "pf_nonlinear")
    throw std::invalid_argument("unknown method '" + method.name + "'");
  return pf_baseline_tree(scene, spec.leaves, pf);
}

/// Runs every (method, scene, target) combination on identical target sets
/// and aggregates the performance measures per method. Trials are
/// independent; `jobs` bounds the worker threads, results are merged in a
/// fixed order so the summary does not depend on scheduling.
inline SuiteSummary run_suite(const SuiteSpec& spec);

}  // namespace rmpflow

#include "rmpflow/simlab_suite.hpp"
