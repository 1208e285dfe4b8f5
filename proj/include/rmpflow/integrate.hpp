#pragma once

#include <sstream>

#include "rmpflow/numkit.hpp"

namespace rmpflow {

/// Closed-loop acceleration policy qddot = pi(q, qdot).
using Policy = std::function<Vector(const Vector&, const Vector&)>;

struct SimState {
  double t = 0.0;
  Vector q;
  Vector qdot;
};

/// Classical fourth-order Runge-Kutta step on the first-order system
/// (q, qdot) with qddot = pi(q, qdot).
inline SimState integrate_step(const Policy& policy, const SimState& s, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("integrate_step: dt must be positive");
  try {
    const Vector a1 = policy(s.q, s.qdot);
    const Vector q2 = s.q + 0.5 * dt * s.qdot;
    const Vector v2 = s.qdot + 0.5 * dt * a1;
    const Vector a2 = policy(q2, v2);
    const Vector q3 = s.q + 0.5 * dt * v2;
    const Vector v3 = s.qdot + 0.5 * dt * a2;
    const Vector a3 = policy(q3, v3);
    const Vector q4 = s.q + dt * v3;
    const Vector v4 = s.qdot + dt * a3;
    const Vector a4 = policy(q4, v4);

    SimState out;
    out.t = s.t + dt;
    out.q = s.q + (dt / 6.0) * (s.qdot + 2.0 * v2 + 2.0 * v3 + v4);
    out.qdot = s.qdot + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    return out;
  } catch (const std::exception& e) {
    std::ostringstream os;
    os << e.what() << " [while stepping from t=" << s.t << ", q=" << s.q.transpose()
       << ", qdot=" << s.qdot.transpose() << "]";
    throw std::runtime_error(os.str());
  }
}

}  // namespace rmpflow
