#include <catch2/catch_amalgamated.hpp>

#include "rmpflow/simlab.hpp"
#include "testutil.hpp"

using namespace rmpflow;
using rmptest::rel_err;
using rmptest::vec;

TEST_CASE("integrate_step: RK4 is exact on uniform motion") {
  const Policy free_flight = [](const Vector& q, const Vector&) {
    return Vector(Vector::Zero(q.size()));
  };
  SimState s{0.0, vec({1, 2}), vec({0.5, -1})};
  const SimState next = integrate_step(free_flight, s, 0.25);
  CHECK(rel_err(next.q, Vector(s.q + 0.25 * s.qdot)) < 1e-15);
  CHECK(rel_err(next.qdot, s.qdot) < 1e-15);
  CHECK(next.t == Catch::Approx(0.25));
  CHECK_THROWS_AS(integrate_step(free_flight, s, 0.0), std::invalid_argument);
}

TEST_CASE("integrate_step: harmonic oscillator energy drift") {
  const Policy harmonic = [](const Vector& q, const Vector&) { return Vector(-q); };
  SimState s{0.0, vec({1}), vec({0})};
  const double dt = 1e-3;
  const int steps = static_cast<int>(std::lround(2.0 * M_PI / dt));
  for (int i = 0; i < steps; ++i) s = integrate_step(harmonic, s, dt);
  const double energy = 0.5 * (s.q.squaredNorm() + s.qdot.squaredNorm());
  CHECK(std::abs(energy - 0.5) < 1e-8);
}

TEST_CASE("integrate_step: pure damping matches the exponential") {
  const Policy damping = [](const Vector&, const Vector& qd) { return Vector(-qd); };
  SimState s{0.0, vec({0}), vec({1})};
  const double dt = 1e-3;
  for (int i = 0; i < 1000; ++i) s = integrate_step(damping, s, dt);
  CHECK(std::abs(s.qdot(0) - std::exp(-1.0)) < 1e-9);
}

TEST_CASE("integrate_step attaches the failing state to policy errors") {
  const Policy broken = [](const Vector&, const Vector&) -> Vector {
    throw std::domain_error("backing field gone");
  };
  try {
    integrate_step(broken, {1.5, vec({2}), vec({0})}, 0.1);
    FAIL("expected propagation");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("backing field gone") != std::string::npos);
    CHECK(msg.find("t=1.5") != std::string::npos);
  }
}

TEST_CASE("run_trial: already at the goal") {
  RmpTree tree = build_exp1d_tree(0.5);
  IntegratorParams ip;
  ip.timeout = 5.0;
  // Start exactly at the converged configuration q = 1/x0 = 2.
  auto [traj, metrics] = run_trial(tree, vec({2.0}), vec({0.0}), ip);
  CHECK_FALSE(metrics.failed);
  CHECK_FALSE(metrics.timed_out);
  CHECK(metrics.time_to_goal < 0.05);
  CHECK(metrics.cspace_path_length < 1e-6);
  CHECK(traj.samples.front().t == 0.0);
  for (std::size_t i = 1; i < traj.samples.size(); ++i)
    CHECK(traj.samples[i].t > traj.samples[i - 1].t);
}

TEST_CASE("run_trial: 1D experiment converges to the designed goal") {
  // Shipped operating point: goal x0 = 1 (near-critical damping there),
  // started at x = 0.5 moving away from the barrier.
  RmpTree tree = build_exp1d_tree(1.0);
  IntegratorParams ip;
  ip.timeout = 10.0;
  ip.v_eps = 0.0;  // integrate the full horizon
  auto [traj, metrics] = run_trial(tree, vec({2.0}), vec({-1.0}), ip);
  CHECK_FALSE(metrics.failed);
  CHECK(traj.samples.back().t == Catch::Approx(10.0).margin(1e-6));
  const double x_final = 1.0 / traj.samples.back().q(0);
  CHECK(std::abs(x_final - 1.0) < 1e-3);
}

TEST_CASE("run_trial marks non-finite trajectories as failed") {
  GdsLeaf leaf;
  leaf.dim = 1;
  leaf.velocity_free_metric = true;
  leaf.metric = [](const Vector&, const Vector&) { return Matrix(Matrix::Identity(1, 1)); };
  leaf.damping = [](const Vector&, const Vector&) { return Matrix(Matrix::Zero(1, 1)); };
  leaf.potential_grad = [](const Vector& x) {
    // Repulsive quadratic: blows up in finite time.
    return Vector(Vector::Constant(1, -(1.0 + x(0) * x(0)) * 1e6));
  };
  RmpTree tree(1);
  tree.root().add_leaf("runaway", identity_map(1), leaf);
  IntegratorParams ip;
  ip.timeout = 2.0;
  auto [traj, metrics] = run_trial(tree, vec({1.0}), vec({0.0}), ip);
  CHECK(metrics.failed);
  CHECK_FALSE(metrics.failure_reason.empty());
}

TEST_CASE("RK4 endpoint error shrinks by ~16x when dt halves") {
  // Fourth-order convergence on the 1D experiment over a fixed horizon.
  auto endpoint = [](double dt) {
    RmpTree tree = build_exp1d_tree(0.5);
    const Policy policy = tree.policy();
    SimState s{0.0, vec({1.0}), vec({0.6})};
    const int steps = static_cast<int>(std::lround(1.0 / dt));
    for (int i = 0; i < steps; ++i) s = integrate_step(policy, s, dt);
    return s.q(0);
  };
  const double ref = endpoint(1.0 / 8192.0);
  const double e1 = std::abs(endpoint(1.0 / 128.0) - ref);
  const double e2 = std::abs(endpoint(1.0 / 256.0) - ref);
  CHECK(e1 / e2 > 10.0);  // ideal ratio 16
  CHECK(e2 < 1e-10);
}

TEST_CASE("exp2d tree keeps kinetic energy on geodesics") {
  // No potential, no damping: 1/2 qdot^T G qdot is conserved.
  Scene scene;
  scene.obstacles.push_back({vec({0, 0}), 0.5});
  Exp2dParams params;
  params.collision.epsilon = 1e-2;
  RmpTree tree = build_exp2d_tree(scene, params);
  // Small constant-metric leaf keeps the root inertia nonsingular along the way.
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
  SimState s{0.0, vec({-2.0, 0.4}), vec({1.0, 0.0})};
  const double k0 = tree.energy(s.q, s.qdot).kinetic;
  double max_drift = 0.0;
  for (int i = 0; i < 5000; ++i) {
    s = integrate_step(policy, s, 1e-3);
    max_drift = std::max(max_drift, std::abs(tree.energy(s.q, s.qdot).kinetic - k0));
  }
  CHECK(max_drift / k0 < 1e-6);
}

TEST_CASE("pf baseline trees") {
  Scene scene;
  scene.arm.link_lengths = {0.4, 0.4, 0.3};
  scene.arm.control_points = {{2, 1.0}, {0, 1.0}, {1, 1.0}, {2, 0.5}};
  scene.obstacles.push_back({vec({0.5, 0.4}), 0.15});
  scene.goal = vec({0.8, 0.2});
  scene.joint_lower = vec({-3, -3, -3});
  scene.joint_upper = vec({3, 3, 3});
  scene.rest_posture = vec({0.4, 0.4, 0.4});

  ReachLeafParams leaves;
  PfBaselineSpec pf;
  pf.w_obstacle = 1.0;

  SECTION("basic: obstacle metric is w_o_max I everywhere") {
    const GdsLeaf leaf = pf_obstacle_leaf(scene.obstacles[0], leaves.collision,
                                          PfKind::kBasic, pf.w_obstacle, pf.alpha);
    for (const auto& x : {vec({0, 0}), vec({0.5, 0.6}), vec({5, 5})})
      CHECK(rel_err(leaf.metric(x, vec({0, 0})), Matrix(pf.w_obstacle * Matrix::Identity(2, 2))) <
            1e-14);
  }

  SECTION("nonlinear: obstacle metric fades to zero far away") {
    const GdsLeaf leaf = pf_obstacle_leaf(scene.obstacles[0], leaves.collision,
                                          PfKind::kNonlinear, pf.w_obstacle, pf.alpha);
    CHECK(leaf.metric(vec({5, 5}), vec({0, 0})).norm() == 0.0);
    const Matrix near = leaf.metric(vec({0.5, 0.4 + 0.15 + 1e-4}), vec({0, 0}));
    CHECK(near(0, 0) > 0.99 * pf.w_obstacle);
  }

  SECTION("scaling multiplies obstacle and C-space weights") {
    const PfBaselineSpec high = pf_scaling(pf, "high");
    CHECK(high.obstacle_scale == 10.0);
    CHECK(high.cspace_scale == 100.0);
    CHECK(pf_scaling(pf, "low").obstacle_scale == 3.0);
    CHECK(pf_scaling(pf, "med").cspace_scale == 50.0);
    CHECK_THROWS_AS(pf_scaling(pf, "extreme"), std::invalid_argument);
  }

  SECTION("baseline trees evaluate") {
    for (const char* name : {"pf_basic", "pf_nonlinear"}) {
      SuiteSpec spec;
      spec.leaves = leaves;
      spec.pf = pf;
      RmpTree tree = build_method_tree(scene, spec, {name, "low"});
      const auto out = tree.evaluate(scene.rest_posture, Vector::Zero(3));
      CHECK(is_finite(out.qddot));
    }
  }
}

TEST_CASE("exp1d tree matches the hand-pulled-back dynamics") {
  // x = 1/q, J = -1/q^2, Jdot qdot = 2 qdot^2 / q^3; leaf G = 1 so
  // qddot = J (f_leaf - Jdot qdot) / J^2.
  const double x_goal = 0.5;
  RmpTree tree = build_exp1d_tree(x_goal);
  for (const auto& [q, qd] : {std::pair{1.0, 0.0}, {2.0, -1.0}, {0.7, 0.4}}) {
    const double x = 1.0 / q;
    const double J = -1.0 / (q * q);
    const double jdotqdot = 2.0 * qd * qd / (q * q * q);
    const double xd = J * qd;
    const double f_leaf = -(x - x_goal) - (1.0 + 1.0 / x) * xd;
    const double expected = J * (f_leaf - jdotqdot) / (J * J);
    const auto out = tree.evaluate(vec({q}), vec({qd}));
    CHECK(out.qddot(0) == Catch::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("path length does not depend on the recording rate") {
  auto length_at = [](double record_dt) {
    RmpTree tree = build_exp1d_tree(1.0);
    IntegratorParams ip;
    ip.timeout = 3.0;
    ip.record_dt = record_dt;
    ip.v_eps = 0.0;
    auto [traj, metrics] = run_trial(tree, vec({2.0}), vec({-1.0}), ip);
    return metrics.cspace_path_length;
  };
  const double coarse = length_at(0.1);
  const double fine = length_at(0.001);
  CHECK(std::abs(coarse - fine) / fine < 1e-3);
}

TEST_CASE("run_suite shares targets across methods") {
  Scene scene;
  scene.arm.link_lengths = {0.4, 0.4, 0.3};
  scene.arm.control_points = {{2, 1.0}, {0, 1.0}, {1, 1.0}};
  scene.obstacles.push_back({vec({0.5, 0.4}), 0.12});
  scene.joint_lower = vec({-3, -3, -3});
  scene.joint_upper = vec({3, 3, 3});
  scene.rest_posture = vec({1.8, -0.7, -0.4});
  scene.goal = vec({0, 0});

  SuiteSpec spec;
  spec.scenes = {scene};
  spec.targets_per_scene = 2;
  spec.seed = 7;
  spec.integrator.timeout = 0.2;  // keep the unit test fast
  spec.methods = {{"rmpflow", "baseline"}, {"pf_basic", "low"}};
  spec.target_lo = vec({-0.9, -0.9});
  spec.target_hi = vec({0.9, 0.9});
  spec.jobs = 2;

  const SuiteSummary summary = run_suite(spec);
  REQUIRE(summary.targets.size() == 1);
  REQUIRE(summary.targets[0].size() == 2);
  REQUIRE(summary.records.size() == 4);
  CHECK(summary.by_method.size() == 2);

  // Identical target list for every method, and sampled outside obstacles.
  for (const auto& rec : summary.records)
    CHECK(rec.target == summary.targets[rec.scene_index][rec.target_index]);
  for (const auto& t : summary.targets[0])
    CHECK((t - scene.obstacles[0].center).norm() > scene.obstacles[0].radius);

  // Same seed reproduces the targets bit for bit.
  const SuiteSummary again = run_suite(spec);
  for (std::size_t i = 0; i < summary.targets[0].size(); ++i)
    CHECK(summary.targets[0][i] == again.targets[0][i]);
}
