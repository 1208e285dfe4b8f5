#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "rmpflow/numkit.hpp"

namespace rmpflow {

/// Differentiable map bundle: value psi(x), Jacobian J(x) and the curvature
/// vector Jdot(x, xdot) * xdot needed by pullback.
struct TaskMap {
  int input_dim = 0;
  int output_dim = 0;
  std::function<Vector(const Vector&)> value;
  std::function<Matrix(const Vector&)> jacobian;
  std::function<Vector(const Vector&, const Vector&)> jdot_times_xdot;
};

/// Directional finite difference of the Jacobian along the ray x + t*xdot,
/// contracted with xdot. Default curvature vector for maps without an
/// analytic second derivative.
inline std::function<Vector(const Vector&, const Vector&)> fd_jdot_times_xdot(
    std::function<Matrix(const Vector&)> jacobian, double h = kFdStep) {
  return [jacobian = std::move(jacobian), h](const Vector& x, const Vector& xdot) {
    const Matrix jp = jacobian(x + h * xdot);
    const Matrix jm = jacobian(x - h * xdot);
    return Vector(((jp - jm) / (2.0 * h)) * xdot);
  };
}

struct TaskMapEval {
  Vector y;
  Vector ydot;
  Matrix J;
  Vector jdotxdot;
};

/// Pushforward evaluation: y = psi(x), ydot = J xdot, plus J and Jdot*xdot.
inline TaskMapEval taskmap_apply(const TaskMap& map, const Vector& x, const Vector& xdot) {
  if (x.size() != map.input_dim || xdot.size() != map.input_dim)
    throw std::invalid_argument("taskmap_apply: state dimension " + std::to_string(x.size()) +
                                " does not match map input " + std::to_string(map.input_dim));
  TaskMapEval out;
  out.y = map.value(x);
  out.J = map.jacobian(x);
  out.ydot = out.J * xdot;
  out.jdotxdot = map.jdot_times_xdot(x, xdot);
  return out;
}

inline TaskMap identity_map(int dim) {
  TaskMap m;
  m.input_dim = m.output_dim = dim;
  m.value = [](const Vector& x) { return x; };
  m.jacobian = [dim](const Vector&) { return Matrix(Matrix::Identity(dim, dim)); };
  m.jdot_times_xdot = [dim](const Vector&, const Vector&) { return Vector(Vector::Zero(dim)); };
  return m;
}

/// y = x - offset (used to center attractor spaces on the goal).
inline TaskMap offset_map(const Vector& offset) {
  const int dim = static_cast<int>(offset.size());
  TaskMap m;
  m.input_dim = m.output_dim = dim;
  m.value = [offset](const Vector& x) { return Vector(x - offset); };
  m.jacobian = [dim](const Vector&) { return Matrix(Matrix::Identity(dim, dim)); };
  m.jdot_times_xdot = [dim](const Vector&, const Vector&) { return Vector(Vector::Zero(dim)); };
  return m;
}

/// 1-D barrier-type map x = 1/q; singular at q = 0.
inline TaskMap reciprocal_map() {
  TaskMap m;
  m.input_dim = m.output_dim = 1;
  auto guard = [](const Vector& q) {
    if (q(0) == 0.0) throw std::domain_error("reciprocal map evaluated at q = 0");
  };
  m.value = [guard](const Vector& q) {
    guard(q);
    return Vector(Vector::Constant(1, 1.0 / q(0)));
  };
  m.jacobian = [guard](const Vector& q) {
    guard(q);
    return Matrix(Matrix::Constant(1, 1, -1.0 / (q(0) * q(0))));
  };
  m.jdot_times_xdot = [guard](const Vector& q, const Vector& qdot) {
    guard(q);
    // d/dt (-1/q^2) = 2 qdot / q^3
    return Vector(Vector::Constant(1, 2.0 * qdot(0) * qdot(0) / (q(0) * q(0) * q(0))));
  };
  return m;
}

/// Signed distance to a sphere surface: s(x) = |x - center| - radius.
/// s = 0 on the surface, s < 0 inside.
inline TaskMap sphere_distance_map(const Vector& center, double radius) {
  if (radius < 0.0) throw std::invalid_argument("sphere_distance_map: negative radius");
  const int dim = static_cast<int>(center.size());
  TaskMap m;
  m.input_dim = dim;
  m.output_dim = 1;
  auto offset = [center](const Vector& x) {
    Vector d = x - center;
    if (d.norm() == 0.0)
      throw std::domain_error("sphere_distance_map: direction undefined at the center");
    return d;
  };
  m.value = [offset, radius](const Vector& x) {
    return Vector(Vector::Constant(1, offset(x).norm() - radius));
  };
  m.jacobian = [offset](const Vector& x) {
    const Vector d = offset(x);
    return Matrix(d.transpose() / d.norm());
  };
  m.jdot_times_xdot = [offset](const Vector& x, const Vector& xdot) {
    const Vector d = offset(x);
    const double r = d.norm();
    const double radial = d.dot(xdot) / r;
    return Vector(Vector::Constant(1, (xdot.squaredNorm() - radial * radial) / r));
  };
  return m;
}

/// Chain-rule composition outer(inner(x)). The curvature vector composes as
/// J_outer * (Jdot xdot)_inner + (Jdot ydot)_outer with ydot = J_inner xdot.
inline TaskMap compose_maps(const TaskMap& outer, const TaskMap& inner) {
  if (inner.output_dim != outer.input_dim)
    throw std::invalid_argument("compose_maps: inner output " + std::to_string(inner.output_dim) +
                                " does not match outer input " + std::to_string(outer.input_dim));
  TaskMap m;
  m.input_dim = inner.input_dim;
  m.output_dim = outer.output_dim;
  m.value = [outer, inner](const Vector& x) { return outer.value(inner.value(x)); };
  m.jacobian = [outer, inner](const Vector& x) {
    return Matrix(outer.jacobian(inner.value(x)) * inner.jacobian(x));
  };
  m.jdot_times_xdot = [outer, inner](const Vector& x, const Vector& xdot) {
    const Vector y = inner.value(x);
    const Vector ydot = inner.jacobian(x) * xdot;
    return Vector(outer.jacobian(y) * inner.jdot_times_xdot(x, xdot) +
                  outer.jdot_times_xdot(y, ydot));
  };
  return m;
}

/// Planar kinematic chain. Joint angles are absolute-relative (each q_i is
/// measured against the previous link), control points sit at a fraction
/// along a link.
struct PlanarArm {
  std::vector<double> link_lengths;
  /// (link index, fraction in [0,1] along that link)
  std::vector<std::pair<int, double>> control_points;

  int dof() const { return static_cast<int>(link_lengths.size()); }

  void validate() const {
    for (double l : link_lengths)
      if (l <= 0.0) throw std::invalid_argument("PlanarArm: link lengths must be positive");
    for (const auto& [link, frac] : control_points) {
      if (link < 0 || link >= dof())
        throw std::invalid_argument("PlanarArm: control point on unknown link");
      if (frac < 0.0 || frac > 1.0)
        throw std::invalid_argument("PlanarArm: control point fraction outside [0,1]");
    }
  }
};

/// Workspace position of one control point as a map from joint angles,
/// with analytic Jacobian and analytic Jdot*qdot (second derivatives of
/// sin/cos along the chain).
inline TaskMap arm_control_point_map(const PlanarArm& arm, int point_index) {
  arm.validate();
  if (point_index < 0 || point_index >= static_cast<int>(arm.control_points.size()))
    throw std::invalid_argument("arm_control_point_map: invalid control point index");
  const auto [link, frac] = arm.control_points[point_index];
  // Effective segment lengths up to and including the control point's link.
  std::vector<double> seg(arm.link_lengths.begin(), arm.link_lengths.begin() + link + 1);
  seg[link] *= frac;
  const int dof = arm.dof();
  const int nseg = link + 1;

  auto cumulative = [nseg](const Vector& q) {
    std::vector<double> theta(nseg);
    double acc = 0.0;
    for (int i = 0; i < nseg; ++i) {
      acc += q(i);
      theta[i] = acc;
    }
    return theta;
  };

  TaskMap m;
  m.input_dim = dof;
  m.output_dim = 2;
  m.value = [seg, cumulative, nseg](const Vector& q) {
    const auto theta = cumulative(q);
    Vector p = Vector::Zero(2);
    for (int i = 0; i < nseg; ++i) {
      p(0) += seg[i] * std::cos(theta[i]);
      p(1) += seg[i] * std::sin(theta[i]);
    }
    return p;
  };
  m.jacobian = [seg, cumulative, nseg, dof](const Vector& q) {
    const auto theta = cumulative(q);
    Matrix J = Matrix::Zero(2, dof);
    // Column j sums the segments at or beyond joint j.
    for (int i = 0; i < nseg; ++i) {
      const double dx = -seg[i] * std::sin(theta[i]);
      const double dy = seg[i] * std::cos(theta[i]);
      for (int j = 0; j <= i; ++j) {
        J(0, j) += dx;
        J(1, j) += dy;
      }
    }
    return J;
  };
  m.jdot_times_xdot = [seg, cumulative, nseg](const Vector& q, const Vector& qdot) {
    const auto theta = cumulative(q);
    Vector out = Vector::Zero(2);
    double thetadot = 0.0;
    for (int i = 0; i < nseg; ++i) {
      thetadot += qdot(i);
      out(0) -= seg[i] * thetadot * thetadot * std::cos(theta[i]);
      out(1) -= seg[i] * thetadot * thetadot * std::sin(theta[i]);
    }
    return out;
  };
  return m;
}

}  // namespace rmpflow
