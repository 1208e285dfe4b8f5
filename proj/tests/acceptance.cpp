// Acceptance suite: one criterion per check, one pass/fail line each.
// Exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rmpflow/commands.hpp"

using namespace rmpflow;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int index, const std::string& what, bool ok, const std::string& detail = "") {
  std::printf("[%s] %2d: %s%s\n", ok ? "PASS" : "FAIL", index, what.c_str(),
              detail.empty() ? "" : ("  (" + detail + ")").c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string config_path(const std::string& name) {
  return std::string(RMPFLOW_CONFIG_DIR) + "/" + name;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rmpflab_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

// --- 1: pullback/resolve vs the least-squares oracle ------------------------
void criterion_algebra() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1001);
  double max_rel = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int parent_dim = rng.uniform_int(1, 4);
    const int n_children = rng.uniform_int(1, 5);
    std::vector<ChildPull> pulls;
    std::vector<ChildCanonical> canon;
    for (int i = 0; i < n_children; ++i) {
      const int child_dim = rng.uniform_int(1, 4);
      Matrix J(child_dim, parent_dim);
      for (int r = 0; r < child_dim; ++r)
        for (int c = 0; c < parent_dim; ++c) J(r, c) = rng.normal();
      const Matrix M = rng.psd_matrix(child_dim, rng.uniform() < 0.3 ? 0.0 : 0.1);
      const Vector a = rng.normal_vector(child_dim);
      const Vector jdx = rng.normal_vector(child_dim);
      pulls.push_back({{M * a, M}, J, jdx});
      canon.push_back({{a, M}, J, jdx});
    }
    const Vector via_pullback = resolve(pullback(pulls, parent_dim)).a;
    const Vector via_ls = least_squares_reference(canon, parent_dim);
    max_rel = std::max(max_rel,
                       (via_pullback - via_ls).norm() / std::max(1.0, via_ls.norm()));
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(1, "algebra equivalence: resolve(pullback) = least-squares oracle, 200 instances",
         max_rel < 1e-8 && secs < 5.0, "max rel err " + fmt(max_rel) + ", " + fmt(secs) + " s");
}

// --- 2: closure --------------------------------------------------------------
void criterion_closure() {
  const auto vf = verify::check_closure(1002, 100, false);
  const auto st = verify::check_closure(1003, 100, true);
  report(2, "closure: tree evaluation equals flat pulled-back GDS (plain and structured)",
         vf.passed && st.passed,
         "velocity-free " + fmt(vf.max_rel_err) + ", structured " + fmt(st.max_rel_err));
}

// --- 3: curvature oracle on every shipped analytic leaf ----------------------
void criterion_curvature_oracle() {
  Rng rng(1004);
  double max_rel = 0.0;
  auto run = [&max_rel](const GdsLeaf& leaf, const std::function<Vector(Rng&)>& sx,
                        const std::function<Vector(Rng&)>& sv, Rng& rng) {
    for (int i = 0; i < 100; ++i) {
      const Vector x = sx(rng);
      const Vector v = sv(rng);
      if (leaf.curvature_Xi_fn) {
        const Matrix fd = curvature_Xi(leaf.metric, x, v);
        max_rel = std::max(max_rel, (leaf.curvature_Xi_fn(x, v) - fd).norm() /
                                        std::max(1.0, fd.norm()));
      }
      if (leaf.curvature_xi_fn) {
        const Vector fd = curvature_xi(leaf.metric, x, v);
        max_rel = std::max(max_rel, (leaf.curvature_xi_fn(x, v) - fd).norm() /
                                        std::max(1.0, fd.norm()));
      }
    }
  };

  CollisionParams cp;
  cp.alpha = 0.5;
  run(collision_leaf(cp),
      [](Rng& r) { return Vector(Vector::Constant(1, r.uniform(0.05, 1.4))); },
      [](Rng& r) { return Vector(Vector::Constant(1, r.uniform(-2.0, 2.0))); }, rng);

  run(inv_quartic_collision_leaf({}),
      [](Rng& r) { return Vector(Vector::Constant(1, r.uniform(0.3, 3.0))); },
      [](Rng& r) { return Vector(Vector::Constant(1, r.uniform(-2.0, 2.0))); }, rng);

  AttractorParams ap;
  run(attractor_leaf(2, ap), [](Rng& r) { return r.uniform_vector(2, -2.0, 2.0); },
      [](Rng& r) { return r.uniform_vector(2, -1.5, 1.5); }, rng);

  JointLimitParams jl;
  jl.lower = Vector::Constant(2, -1.5);
  jl.upper = Vector::Constant(2, 1.5);
  jl.rest_posture = Vector::Zero(2);
  run(jointlimit_leaf(jl), [](Rng& r) { return r.uniform_vector(2, -1.4, 1.4); },
      [](Rng& r) { return r.uniform_vector(2, -2.0, 2.0); }, rng);

  run(cspace_damper_leaf(2, 0.5, 1.0), [](Rng& r) { return r.uniform_vector(2, -1.0, 1.0); },
      [](Rng& r) { return r.uniform_vector(2, -1.0, 1.0); }, rng);

  report(3, "curvature oracle: analytic Xi/xi of shipped leaves match finite differences",
         max_rel < 1e-4, "max rel err " + fmt(max_rel));
}

// --- 4: Coriolis identity -----------------------------------------------------
void criterion_coriolis() {
  const auto rep = verify::check_coriolis(1005, 100);
  report(4, "Coriolis identity: xi_G = C(x, xdot) xdot for velocity-independent metrics",
         rep.passed, "max rel err " + fmt(rep.max_rel_err));
}

// --- 5: Lyapunov rate -----------------------------------------------------------
void criterion_lyapunov() {
  const auto rep = verify::check_lyapunov_2d(1006, 10);
  report(5, "Lyapunov rate: |Vdot + qdot' B qdot| within max(1e-6, 10 dt^2), V non-increasing",
         rep.passed, "max err " + fmt(rep.max_abs_err) + " over " +
                         std::to_string(rep.samples) + " samples");
}

// --- 6: geodesic conservation ----------------------------------------------------
void criterion_geodesic() {
  const auto rep = verify::check_geodesic(1007, 3, 10.0, 1e-3);
  report(6, "geodesic conservation: kinetic-energy drift < 1e-6 over 10 s with Phi = B = 0",
         rep.passed, "max rel drift " + fmt(rep.max_abs_err));
}

// --- 7: the 1-D controlled experiment ----------------------------------------------
void criterion_exp1d() {
  const double x_goal = 1.0;
  const Vector q0 = Vector::Constant(1, 2.0);
  const Vector qdot0 = Vector::Constant(1, -1.0);
  IntegratorParams ip;
  ip.timeout = 10.0;
  ip.v_eps = 0.0;

  // (a) correct pullback converges by T = 10 s.
  RmpTree good = build_exp1d_tree(x_goal);
  auto [gtraj, gm] = run_trial(good, q0, qdot0, ip);
  const double err_a = std::abs(1.0 / gtraj.samples.back().q(0) - x_goal);

  // (b) dropping Jdot qdot produces Lyapunov violations.
  const auto ablation = verify::check_lyapunov_1d(false);
  const bool violated = !ablation.passed && ablation.max_abs_err > 1e-3;

  // (c) nonlinear damping recovers convergence but stays inconsistent with
  // the designed task trajectory.
  RmpTree damped = build_exp1d_tree(x_goal, Exp1dDamping::kNonlinearVelocity);
  damped.options.use_jdot = false;
  IntegratorParams long_ip = ip;
  long_ip.timeout = 20.0;
  auto [dtraj, dm] = run_trial(damped, q0, qdot0, long_ip);
  const double err_c = std::abs(1.0 / dtraj.samples.back().q(0) - x_goal);

  const Policy reference = exp1d_reference_policy(x_goal);
  SimState ref{0.0, Vector::Constant(1, 1.0 / q0(0)),
               Vector::Constant(1, -qdot0(0) / (q0(0) * q0(0)))};
  double sup = 0.0;
  const int steps_per_record = 10;  // record_dt / dt in the trajectory
  for (std::size_t i = 1; i < dtraj.samples.size() && ref.t < 10.0; ++i) {
    for (int k = 0; k < steps_per_record; ++k) ref = integrate_step(reference, ref, ip.dt);
    if (std::abs(dtraj.samples[i].t - ref.t) < 1e-9)
      sup = std::max(sup, std::abs(1.0 / dtraj.samples[i].q(0) - ref.q(0)));
  }

  const bool ok = err_a < 1e-3 && violated && err_c < 1e-3 && sup > 1e-2;
  report(7,
         "1D experiment: converges with Jdot, Lyapunov violation without, damped variant "
         "inconsistent",
         ok, "|x(T)-x0| " + fmt(err_a) + ", violation " + fmt(ablation.max_abs_err) +
                 ", damped error " + fmt(err_c) + ", sup dev " + fmt(sup));
}

// --- 8: the 2-D orbit experiment -----------------------------------------------------
void criterion_exp2d() {
  Scene scene;
  scene.obstacles.push_back({Vector::Zero(2), 0.4});
  Exp2dParams params;
  params.collision.alpha = 0.0;
  params.collision.epsilon = 1e-6;

  std::vector<std::pair<Vector, Vector>> fan;
  for (double y : {-0.3, -0.15, 0.0, 0.15, 0.3}) {
    Vector q(2), qd(2);
    q << -2.0, y;
    qd << 1.3, 0.0;
    fan.emplace_back(q, qd);
  }

  IntegratorParams ip;
  ip.timeout = 4.0;
  ip.v_eps = 0.0;
  const TrialContext ctx = particle_trial_context(scene, false);

  bool all_clear = true;
  for (const auto& [q0, qd0] : fan) {
    RmpTree tree = build_exp2d_tree(scene, params);
    auto [traj, m] = run_trial(tree, q0, qd0, ip, ctx);
    for (const auto& s : traj.samples) all_clear = all_clear && s.min_dist > 0.0;
  }

  bool ablation_ok = false;
  for (const auto& [q0, qd0] : fan) {
    RmpTree tree = build_exp2d_tree(scene, params);
    tree.options.use_curvature = false;
    auto [traj, m] = run_trial(tree, q0, qd0, ip, ctx);
    double straight_dev = 0.0;
    bool monotone_into_contact = false;
    double prev = traj.samples.front().min_dist;
    bool monotone = true;
    for (const auto& s : traj.samples) {
      straight_dev = std::max(straight_dev, (s.q - Vector(q0 + s.t * qd0)).norm());
      if (s.min_dist > prev + 1e-12) monotone = false;
      prev = s.min_dist;
      if (s.min_dist < 0.0 && monotone) {
        monotone_into_contact = true;
        break;
      }
    }
    ablation_ok = ablation_ok || monotone_into_contact || straight_dev < 1e-6;
  }

  report(8, "2D orbit: curvature keeps s > 0 on the fan; without it straight-through contact",
         all_clear && ablation_ok);
}

// --- 9: PSD curvature condition ---------------------------------------------------------
void criterion_xi_psd() {
  const auto rep = verify::check_xi_psd(1008, 1000);
  report(9, "PSD condition: symmetrized Xi eigenvalues >= -1e-10 on barrier leaves",
         rep.passed, "worst negative part " + fmt(rep.max_abs_err));
}

// --- 10: diagonal-RMP scaling identity --------------------------------------------------
void criterion_diagonal() {
  const auto rep = verify::check_diagonal_scaling(1009, 100);
  report(10, "diagonal-RMP identity: combined resolve equals the D-scaled least squares",
         rep.passed, "max rel err " + fmt(rep.max_rel_err));
}

// --- 11: invariance --------------------------------------------------------------------------
void criterion_invariance() {
  const auto rep = verify::check_invariance(verify::cubic_diffeo(), 1e-4);
  report(11, "invariance: cubic reparameterization leaves the task trajectory unchanged",
         rep.passed, "sup dev " + fmt(rep.max_abs_err));
}

// --- 12: the reaching suite ---------------------------------------------------------------------
void criterion_reach() {
  const auto start = std::chrono::steady_clock::now();
  const fs::path out = fresh_dir("reach");
  const int jobs = std::max(1u, std::thread::hardware_concurrency());
  const int status =
      cli::cmd_reach(config_path("reach_desk.json"), out.string(), std::nullopt, jobs);
  double rmp_fraction = 1.0, pf_low_fraction = 0.0;
  bool parsed = false;
  if (status == 0) {
    const auto summary = nlohmann::json::parse(slurp(out / "reach_summary.json"));
    rmp_fraction = summary["summary"]["rmpflow"]["collided_fraction"].get<double>();
    pf_low_fraction = summary["summary"]["pf_basic_low"]["collided_fraction"].get<double>();
    parsed = true;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(12, "reaching suite: RMPflow collision fraction 0, PF-basic/low > 0, under 5 min",
         parsed && rmp_fraction == 0.0 && pf_low_fraction > 0.0 && secs < 300.0,
         "rmpflow " + fmt(rmp_fraction) + ", pf_basic_low " + fmt(pf_low_fraction) + ", " +
             fmt(secs) + " s");
}

// --- 13: determinism --------------------------------------------------------------------------------
void criterion_determinism() {
  const fs::path out1 = fresh_dir("det1");
  const fs::path out2 = fresh_dir("det2");
  bool ok = true;
  for (const auto& out : {out1, out2}) {
    ok = ok && cli::cmd_run(config_path("exp1d.json"), out.string(), std::nullopt) == 0;
    ok = ok && cli::cmd_run(config_path("exp2d_orbit.json"), out.string(), std::nullopt) == 0;
    ok = ok && cli::cmd_verify("coriolis", (out / "v").string(), 5) == 0;
  }
  std::size_t compared = 0;
  if (ok) {
    for (const auto& entry : fs::recursive_directory_iterator(out1)) {
      if (!entry.is_regular_file()) continue;
      const fs::path other = out2 / fs::relative(entry.path(), out1);
      ok = ok && fs::exists(other) && slurp(entry.path()) == slurp(other);
      ++compared;
    }
  }
  report(13, "determinism: repeated runs with the same seed are byte-identical", ok,
         std::to_string(compared) + " files compared");
}

}  // namespace

int main() {
  criterion_algebra();
  criterion_closure();
  criterion_curvature_oracle();
  criterion_coriolis();
  criterion_lyapunov();
  criterion_geodesic();
  criterion_exp1d();
  criterion_exp2d();
  criterion_xi_psd();
  criterion_diagonal();
  criterion_invariance();
  criterion_reach();
  criterion_determinism();
  if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
