#include <catch2/catch_amalgamated.hpp>

#include "rmpflow/rng.hpp"
#include "rmpflow/taskmap.hpp"
#include "testutil.hpp"

using namespace rmpflow;
using rmptest::rel_err;
using rmptest::vec;

namespace {

/// Oracle for the curvature vector: finite difference of t -> J(x + t xdot)
/// contracted with xdot.
Vector jdot_oracle(const TaskMap& m, const Vector& x, const Vector& xdot, double h = 1e-6) {
  const Matrix jp = m.jacobian(x + h * xdot);
  const Matrix jm = m.jacobian(x - h * xdot);
  return ((jp - jm) / (2.0 * h)) * xdot;
}

void check_derivatives(const TaskMap& m, Rng& rng, double lo, double hi, int samples = 100) {
  for (int i = 0; i < samples; ++i) {
    const Vector x = rng.uniform_vector(m.input_dim, lo, hi);
    const Vector xd = rng.uniform_vector(m.input_dim, -1.0, 1.0);
    const Matrix j_fd = finite_diff_jacobian(m.value, x);
    CHECK(rel_err(m.jacobian(x), j_fd) < 1e-5);
    CHECK(rel_err(m.jdot_times_xdot(x, xd), jdot_oracle(m, x, xd)) < 1e-4);
  }
}

}  // namespace

TEST_CASE("taskmap_apply on the identity") {
  const TaskMap m = identity_map(2);
  const auto ev = taskmap_apply(m, vec({1, 2}), vec({3, 4}));
  CHECK(ev.y == vec({1, 2}));
  CHECK(ev.ydot == vec({3, 4}));
  CHECK(ev.J == Matrix::Identity(2, 2));
  CHECK(ev.jdotxdot.norm() == 0.0);
  CHECK_THROWS_AS(taskmap_apply(m, vec({1}), vec({1})), std::invalid_argument);
}

TEST_CASE("reciprocal map values and derivatives") {
  const TaskMap m = reciprocal_map();
  CHECK(m.value(vec({1}))(0) == 1.0);
  CHECK(m.value(vec({0.5}))(0) == 2.0);
  CHECK(m.value(vec({-1}))(0) == -1.0);
  CHECK_THROWS_AS(m.value(vec({0})), std::domain_error);

  const auto ev = taskmap_apply(m, vec({2}), vec({1}));
  CHECK(ev.y(0) == Catch::Approx(0.5));
  CHECK(ev.ydot(0) == Catch::Approx(-0.25));
  CHECK(ev.J(0, 0) == Catch::Approx(-0.25));
  CHECK(ev.jdotxdot(0) == Catch::Approx(0.25));

  Rng rng(3);
  check_derivatives(m, rng, 0.5, 3.0);
}

TEST_CASE("offset map recenters on the goal") {
  const TaskMap m = offset_map(vec({1, 1}));
  CHECK(m.value(vec({1, 1})).norm() == 0.0);
  CHECK(m.value(vec({2, 0})) == vec({1, -1}));
}

TEST_CASE("sphere distance map geometry") {
  const TaskMap m = sphere_distance_map(vec({0, 0}), 1.0);
  const auto ev = taskmap_apply(m, vec({2, 0}), vec({0, 0}));
  CHECK(ev.y(0) == Catch::Approx(1.0));
  CHECK(rel_err(ev.J, Matrix(vec({1, 0}).transpose())) < 1e-14);

  // On the surface the distance vanishes.
  CHECK(m.value(vec({0, 1}))(0) == Catch::Approx(0.0).margin(1e-15));

  // Tangential motion curves the distance: jdotxdot = (|xd|^2 - radial^2)/|x|.
  CHECK(m.jdot_times_xdot(vec({0, 2}), vec({1, 0}))(0) == Catch::Approx(0.5));

  CHECK_THROWS_AS(m.value(vec({0, 0})), std::domain_error);

  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    Vector x = rng.uniform_vector(2, -3.0, 3.0);
    if (x.norm() < 0.3) x(0) += 1.0;
    const Vector xd = rng.uniform_vector(2, -1.0, 1.0);
    CHECK(rel_err(m.jacobian(x), finite_diff_jacobian(m.value, x)) < 1e-5);
    CHECK(rel_err(m.jdot_times_xdot(x, xd), jdot_oracle(m, x, xd)) < 1e-4);
  }
}

TEST_CASE("planar arm forward kinematics") {
  PlanarArm one_link{{1.0}, {{0, 1.0}}};
  const TaskMap tip = arm_control_point_map(one_link, 0);
  CHECK(rel_err(tip.value(vec({0})), vec({1, 0})) < 1e-15);
  CHECK(rel_err(tip.value(vec({M_PI / 2})), vec({0, 1})) < 1e-12);

  PlanarArm two_link{{1.0, 1.0}, {{1, 1.0}, {0, 0.5}}};
  const TaskMap tip2 = arm_control_point_map(two_link, 0);
  CHECK(rel_err(tip2.value(vec({0, 0})), vec({2, 0})) < 1e-15);
  CHECK(rel_err(tip2.jacobian(vec({0, 0})), finite_diff_jacobian(tip2.value, vec({0, 0}))) <
        1e-8);

  // Mid-link control point.
  const TaskMap mid = arm_control_point_map(two_link, 1);
  CHECK(rel_err(mid.value(vec({0, 0})), vec({0.5, 0})) < 1e-15);

  Rng rng(13);
  check_derivatives(tip2, rng, -M_PI, M_PI);
  check_derivatives(mid, rng, -M_PI, M_PI);

  CHECK_THROWS_AS(arm_control_point_map(two_link, 7), std::invalid_argument);
  PlanarArm bad{{1.0, -1.0}, {}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("compose_maps chains values and derivatives") {
  PlanarArm arm{{1.0, 1.0}, {{1, 1.0}}};
  const TaskMap tip = arm_control_point_map(arm, 0);
  const TaskMap dist = sphere_distance_map(vec({1.5, 0.8}), 0.4);
  const TaskMap comp = compose_maps(dist, tip);

  Rng rng(19);
  for (int i = 0; i < 20; ++i) {
    const Vector q = rng.uniform_vector(2, -1.0, 1.0);
    const Vector direct = dist.value(tip.value(q));
    CHECK(rel_err(comp.value(q), direct) < 1e-14);

    const TaskMap with_ident = compose_maps(identity_map(1), comp);
    CHECK(rel_err(with_ident.value(q), comp.value(q)) < 1e-14);
  }

  check_derivatives(comp, rng, -1.0, 1.0, 50);

  CHECK_THROWS_AS(compose_maps(tip, dist), std::invalid_argument);
}

TEST_CASE("compose_maps is associative") {
  const TaskMap a = reciprocal_map();
  const TaskMap b = offset_map(vec({0.5}));
  const TaskMap c = sphere_distance_map(vec({2.0}), 0.1);

  const TaskMap left = compose_maps(compose_maps(c, b), a);
  const TaskMap right = compose_maps(c, compose_maps(b, a));

  Rng rng(29);
  for (int i = 0; i < 50; ++i) {
    const Vector q = vec({rng.uniform(0.3, 3.0)});
    const Vector qd = vec({rng.uniform(-1.0, 1.0)});
    CHECK(rel_err(left.value(q), right.value(q)) < 1e-12);
    CHECK(rel_err(left.jacobian(q), right.jacobian(q)) < 1e-12);
    CHECK(rel_err(left.jdot_times_xdot(q, qd), right.jdot_times_xdot(q, qd)) < 1e-12);
  }
}
